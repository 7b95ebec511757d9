//! Experiment definitions, orchestration, metrics and artifact output.
//!
//! A [`RunConfig`] names one experiment/method pair with its architecture,
//! dataset sizes and training schedule; [`run_experiment`] executes the whole
//! protocol — oracle self-check, seeded sampling, two-phase training (or the
//! finite-difference solve), evaluation on the fixed grids — and writes
//! `run.csv`, `summary.csv`, `fields.csv` and a checkpoint into the output
//! directory.

pub mod metrics;
pub mod oracle;
pub mod sample;
pub mod train;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoders::{
    write_checkpoint, CkanConfig, EncoderConfig, FieldDef, HardConstraint, InputScaler, MlpConfig,
};
use crate::fd;
use crate::model::{
    DatasetSizes, Experiment, LossBreakdown, LossWeights, MemoryFields, ProblemSpec,
};
use crate::optim::AdamConfig;

pub use metrics::{eval_grid, evaluate, EvalGrid, FieldView, Metrics};
pub use oracle::{ExactOracle, OracleError};
pub use sample::{sample_points, DataGroup, DataTag, Datasets};
pub use train::{
    build_aux_pipeline, build_fpde_pipeline, build_minpo_pipeline, loss_and_grad, loss_only,
    train, ParamLayout, Phase, Pipeline, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fd(#[from] fd::FdError),
    #[error("training diverged (non-finite loss); last checkpoint written")]
    Diverged,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    Exp1Forward,
    Exp1Inverse,
    Exp2,
    Exp3,
}

impl ExperimentId {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exp1-forward" => Some(Self::Exp1Forward),
            "exp1-inverse" => Some(Self::Exp1Inverse),
            "exp2" => Some(Self::Exp2),
            "exp3" => Some(Self::Exp3),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Exp1Forward => "exp1-forward",
            Self::Exp1Inverse => "exp1-inverse",
            Self::Exp2 => "exp2",
            Self::Exp3 => "exp3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MinpoKan,
    MinpoMlp,
    Apinn,
    Apikan,
    Fpinn,
    Fpikan,
    FdForward,
    FdUpwind,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "minpo-kan" => Some(Self::MinpoKan),
            "minpo-mlp" => Some(Self::MinpoMlp),
            "apinn" => Some(Self::Apinn),
            "apikan" => Some(Self::Apikan),
            "fpinn" => Some(Self::Fpinn),
            "fpikan" => Some(Self::Fpikan),
            "fd-forward" => Some(Self::FdForward),
            "fd-upwind" => Some(Self::FdUpwind),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::MinpoKan => "minpo-kan",
            Self::MinpoMlp => "minpo-mlp",
            Self::Apinn => "apinn",
            Self::Apikan => "apikan",
            Self::Fpinn => "fpinn",
            Self::Fpikan => "fpikan",
            Self::FdForward => "fd-forward",
            Self::FdUpwind => "fd-upwind",
        }
    }

    pub fn is_fd(&self) -> bool {
        matches!(self, Self::FdForward | Self::FdUpwind)
    }

    pub fn is_minpo(&self) -> bool {
        matches!(self, Self::MinpoKan | Self::MinpoMlp)
    }

    fn uses_kan(&self) -> bool {
        matches!(self, Self::MinpoKan | Self::Apikan | Self::Fpikan)
    }
}

/// One run: experiment, method, architecture, datasets, schedule, output.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentId,
    pub method: Method,
    /// Hidden-layer width of the encoder.
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Chebyshev degree (KAN encoders).
    pub degree: usize,
    /// Memory strength; trained when the experiment is inverse.
    pub kappa: f64,
    /// Fractional order; meaningful only for the fractional experiment.
    pub alpha: Option<f64>,
    /// Temporal domain length of the Volterra experiment.
    pub a_len: f64,
    pub n_res: usize,
    pub n_i: usize,
    pub n_t: usize,
    pub n_meas: usize,
    pub n_mem: usize,
    pub n_data: usize,
    /// Spatial grid nodes per axis of the finite-difference solver.
    pub n_x: usize,
    pub seed: u64,
    pub adam_iters: usize,
    pub lbfgs_iters: usize,
    pub adam_lr: f64,
    pub lambda_ide: f64,
    pub lambda_data: f64,
    pub lambda_mem: f64,
    /// Emit a log row every this many iterations.
    pub log_every: usize,
    /// Optional capacity ladder: replaces `width` by the ladder entry whose
    /// parameter count is closest to `n_res`.
    pub width_ladder: Option<Vec<usize>>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Paper-caption defaults for each experiment/method pair.
    pub fn defaults(experiment: ExperimentId, method: Method) -> Self {
        let kan = method.uses_kan();
        let (width, degree) = match experiment {
            ExperimentId::Exp1Forward => (if kan { 15 } else { 33 }, 4),
            ExperimentId::Exp1Inverse => (if kan { 15 } else { 30 }, 3),
            ExperimentId::Exp2 => (if kan { 10 } else { 21 }, 3),
            ExperimentId::Exp3 => (if kan { 15 } else { 33 }, 4),
        };
        let (n_res, n_i, n_t, n_meas, n_mem, n_data) = match experiment {
            ExperimentId::Exp1Forward => (2400, 20, 0, 0, 100, 1),
            ExperimentId::Exp1Inverse => (2000, 20, 0, 10, 100, 1),
            ExperimentId::Exp2 => (1000, 10, 0, 0, 4, 100),
            ExperimentId::Exp3 => (2000, 0, 10, 0, 200, 100),
        };
        let (adam_iters, lbfgs_iters, log_every) = match experiment {
            ExperimentId::Exp1Forward | ExperimentId::Exp1Inverse => (10_000, 2000, 100),
            ExperimentId::Exp2 => (5000, 1500, 250),
            ExperimentId::Exp3 => (6000, 1200, 100),
        };
        RunConfig {
            experiment,
            method,
            width,
            depth: 3,
            degree,
            kappa: 1.0,
            alpha: matches!(experiment, ExperimentId::Exp3).then_some(0.5),
            a_len: 1.0,
            n_res,
            n_i,
            n_t,
            n_meas,
            n_mem,
            n_data,
            n_x: 25,
            seed: 0,
            adam_iters,
            lbfgs_iters,
            adam_lr: 1e-3,
            lambda_ide: 1.0,
            lambda_data: 1.0,
            lambda_mem: 1.0,
            log_every,
            width_ladder: None,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        match (self.experiment, self.method) {
            (e, m) if m.is_fd() && e != ExperimentId::Exp2 => {
                return bad(format!("{} only applies to exp2", m.name()));
            }
            (ExperimentId::Exp3, Method::Apinn | Method::Apikan) => {
                return bad("auxiliary-field baselines do not apply to exp3".into());
            }
            (e, Method::Fpinn | Method::Fpikan) if e != ExperimentId::Exp3 => {
                return bad(format!("{} only applies to exp3", self.method.name()));
            }
            _ => {}
        }
        match (self.experiment, self.alpha) {
            (ExperimentId::Exp3, None) => return bad("exp3 requires --alpha".into()),
            (ExperimentId::Exp3, Some(a)) if !(0.0 < a && a < 1.0) => {
                return bad(format!("alpha {a} outside (0, 1)"));
            }
            (e, Some(_)) if e != ExperimentId::Exp3 => {
                return bad("alpha only applies to exp3".into());
            }
            _ => {}
        }
        if self.experiment == ExperimentId::Exp3 && self.n_t == 0 {
            return bad("exp3 requires n_t >= 1".into());
        }
        if !(self.lambda_ide > 0.0 && self.lambda_data > 0.0 && self.lambda_mem > 0.0) {
            return bad("loss weights must be positive".into());
        }
        if self.n_res == 0 {
            return bad("n_res must be positive".into());
        }
        Ok(())
    }

    pub fn governing_experiment(&self) -> Experiment {
        match self.experiment {
            ExperimentId::Exp1Forward | ExperimentId::Exp1Inverse => {
                Experiment::Volterra { kappa: self.kappa, domain_len: self.a_len }
            }
            ExperimentId::Exp2 => Experiment::Nonlocal3d,
            ExperimentId::Exp3 => Experiment::FracDiffusion { alpha: self.alpha.unwrap_or(0.5) },
        }
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let sizes = DatasetSizes {
            n_res: self.n_res,
            n_data: self.n_data,
            n_mem: self.n_mem,
            n_i: self.n_i.max(1),
            n_t: self.n_t.max(1),
            n_meas: self.n_meas,
        };
        let weights = LossWeights {
            ide: self.lambda_ide,
            data: self.lambda_data,
            mem: self.lambda_mem,
        };
        let trainable_kappa =
            matches!(self.experiment, ExperimentId::Exp1Inverse).then_some(0.5);
        ProblemSpec::new(self.governing_experiment(), weights, sizes, trainable_kappa)
            .expect("validated configuration")
    }

    /// Effective hidden width after the optional capacity ladder.
    pub fn effective_width(&self) -> usize {
        match &self.width_ladder {
            None => self.width,
            Some(ladder) => {

           let mut best = (usize::MAX, self.width);
                for &w in ladder {
                    let count = self.param_count_for_width(w);
                    let gap = count.abs_diff(self.n_res);
                    if gap < best.0 {
                        best = (gap, w);
                    }
                }
                best.1
            }
        }
    }

    fn param_count_for_width(&self, w: usize) -> usize {
        let dim = self.governing_experiment().dim();
        let widths = self.encoder_widths(dim, w, 1);
        if self.method.uses_kan() {
            widths.windows(2).map(|p| p[0] * p[1] * (self.degree + 1)).sum()
        } else {
            widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
        }
    }

    fn encoder_widths(&self, input_dim: usize, hidden: usize, out_dim: usize) -> Vec<usize> {
        let mut v = vec![input_dim];
        v.extend(std::iter::repeat(hidden).take(self.depth));
        v.push(out_dim);
        v
    }

    fn field_def(&self, out_dim: usize, constraint: Option<HardConstraint>) -> FieldDef {
        let ex = self.governing_experiment();
        let (lo, hi): (Vec<f64>, Vec<f64>) = ex.domain().into_iter().unzip();
        let scaler = InputScaler::new(lo, hi).expect("valid domain");
        let widths = self.encoder_widths(ex.dim(), self.effective_width(), out_dim);
        let encoder = if self.method.uses_kan() {
            EncoderConfig::Ckan(CkanConfig::new(widths, self.degree).expect("valid architecture"))
        } else {
            EncoderConfig::Mlp(MlpConfig::new(widths).expect("valid architecture"))
        };
        FieldDef { encoder, scaler, constraint }
    }
}

/// The trainable model of one run.
pub enum Model {
    Minpo(MemoryFields),
    Aux(FieldDef),
    Fpde(FieldDef),
}

/// Everything assembled and ready to train.
pub struct Prepared {
    pub cfg: RunConfig,
    pub spec: ProblemSpec,
    pub ds: Datasets,
    pub model: Model,
    pub pipeline: Pipeline,
    pub params: Vec<f64>,
    pub grid: EvalGrid,
}

impl Prepared {
    pub fn view<'a>(&'a self, params: &'a [f64]) -> FieldView<'a> {
        match &self.model {
            Model::Minpo(fields) => FieldView::Minpo {
                map: self.spec.reconstruction,
                fields,
                layout: &self.pipeline.layout,
                params,
            },
            Model::Aux(net) => FieldView::Aux {
                net,
                params,
                m_index: match self.spec.experiment {
                    Experiment::Nonlocal3d => 3,
                    _ => 1,
                },
            },
            Model::Fpde(net) => FieldView::Fpde {
                net,
                params,
                alpha: self.cfg.alpha.unwrap_or(0.5),
                n_t: self.cfg.n_t,
            },
        }
    }

    pub fn kappa_hat(&self, params: &[f64]) -> Option<f64> {
        self.pipeline.layout.kappa.map(|i| params[i])
    }

    pub fn metrics(&self, params: &[f64]) -> Metrics {
        let kap = self.kappa_hat(params).map(|hat| (hat, self.cfg.kappa));
        evaluate(&self.view(params), &self.grid, kap)
    }
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Build datasets, model and pipeline for a neural run.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared, RunError> {
    cfg.validate()?;
    if cfg.method.is_fd() {
        return Err(RunError::Config(
            "finite-difference methods have no training pipeline".into(),
        ));
    }
    let spec = cfg.problem_spec();
    ExactOracle::new(&spec.experiment).self_check(1000, cfg.seed)?;
    let ds = sample_points(&spec, cfg.seed);

    let mut params = Vec::new();
    let (model, pipeline) = match (cfg.method, &spec.experiment) {
        (Method::MinpoKan | Method::MinpoMlp, ex) => {
            let constraint = matches!(ex, Experiment::Nonlocal3d)
                .then(|| HardConstraint { coord_product: vec![0, 1, 2] });
            let memory = cfg.field_def(1, constraint);
            let inverse = matches!(ex, Experiment::FracDiffusion { .. })
                .then(|| cfg.field_def(1, None));
            let fields = MemoryFields { memory, inverse };
            params.extend(fields.memory.init_params(&mut stream(cfg.seed, 10)));
            if let Some(inv) = &fields.inverse {
                params.extend(inv.init_params(&mut stream(cfg.seed, 11)));
            }
            if spec.trainable_kappa.is_some() {
                params.push(spec.trainable_kappa.unwrap());
            }
            let pipeline = build_minpo_pipeline(&spec, &fields, &ds);
            (Model::Minpo(fields), pipeline)
        }
        (Method::Apinn | Method::Apikan, ex) => {
            let out_dim = match ex {
                Experiment::Nonlocal3d => 4,
                _ => 2,
            };
            let net = cfg.field_def(out_dim, None);
            params.extend(net.init_params(&mut stream(cfg.seed, 10)));
            if spec.trainable_kappa.is_some() {
                params.push(spec.trainable_kappa.unwrap());
            }
            let pipeline = build_aux_pipeline(&spec, &net, &ds);
            (Model::Aux(net), pipeline)
        }
        (Method::Fpinn | Method::Fpikan, _) => {
            let net = cfg.field_def(1, None);
            params.extend(net.init_params(&mut stream(cfg.seed, 10)));
            let pipeline = build_fpde_pipeline(&spec, &net, &ds);
            (Model::Fpde(net), pipeline)
        }
        (m, _) => unreachable!("unhandled method {}", m.name()),
    };
    debug_assert_eq!(params.len(), pipeline.layout.total);
    let grid = eval_grid(&spec.experiment, spec.sizes.n_t);
    Ok(Prepared { cfg: cfg.clone(), spec, ds, model, pipeline, params, grid })
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub experiment: String,
    pub method: String,
    pub seed: u64,
    pub e_u: f64,
    pub e_m: f64,
    pub e_kappa: Option<f64>,
    pub kappa_hat: Option<f64>,
    pub wall_seconds: f64,
    pub iterations: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.12e}"))
}

struct RunLog {
    file: Option<std::io::BufWriter<std::fs::File>>,
    with_method: bool,
    method: String,
}

impl RunLog {
    fn new(dir: Option<&PathBuf>, method: &Method) -> Result<Self, RunError> {
        let with_method = !method.is_minpo();
        let file = match dir {
            None => None,
            Some(d) => {
                std::fs::create_dir_all(d)?;
                let mut f = std::io::BufWriter::new(std::fs::File::create(d.join("run.csv"))?);
                let mut header =
                    "iteration,L_IDE,L_data,L_M,total,e_u,e_M,e_kappa".to_string();
                if with_method {
                    header.push_str(",method");
                }
                writeln!(f, "{header}")?;
                Some(f)
            }
        };
        Ok(RunLog { file, with_method, method: method.name().to_string() })
    }

    fn row(&mut self, iter: usize, bd: &LossBreakdown, m: &Metrics) -> Result<(), RunError> {
        if let Some(f) = &mut self.file {
            let mut line = format!(
                "{iter},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
                bd.ide,
                bd.data,
                bd.mem,
                bd.total,
                m.e_u,
                m.e_m,
                fmt_opt(m.e_kappa)
            );
            if self.with_method {
                line.push(',');
                line.push_str(&self.method);
            }
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn write_summary(dir: &PathBuf, s: &RunSummary, fd_extra: Option<(&str, usize)>) -> Result<(), RunError> {
    let mut text = String::new();
    let mut header = "experiment,method,seed,e_u,e_M,e_kappa,wall_seconds".to_string();
    if fd_extra.is_some() {
        header.push_str(",scheme,n_x");
    }
    writeln!(text, "{header}").unwrap();
    let mut line = format!(
        "{},{},{},{:.12e},{:.12e},{},{:.3}",
        s.experiment,
        s.method,
        s.seed,
        s.e_u,
        s.e_m,
        fmt_opt(s.e_kappa),
        s.wall_seconds
    );
    if let Some((scheme, n_x)) = fd_extra {
        write!(line, ",{scheme},{n_x}").unwrap();
    }
    writeln!(text, "{line}").unwrap();
    std::fs::write(dir.join("summary.csv"), text)?;
    Ok(())
}

fn write_fields_csv(
    dir: &PathBuf,
    dim: usize,
    points: &[Vec<f64>],
    u_hat: &[f64],
    u_exact: &[f64],
    m_hat: &[f64],
    m_exact: &[f64],
) -> Result<(), RunError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("fields.csv"))?);
    let coord_names: &[&str] = match dim {
        1 => &["t"],
        2 => &["x", "t"],
        _ => &["x1", "x2", "t"],
    };
    writeln!(f, "{},u_hat,u_exact,m_hat,m_exact", coord_names.join(","))?;
    for (i, p) in points.iter().enumerate() {
        let coords: Vec<String> = p.iter().map(|c| format!("{c:.12e}")).collect();
        writeln!(
            f,
            "{},{:.12e},{:.12e},{:.12e},{:.12e}",
            coords.join(","),
            u_hat[i],
            u_exact[i],
            m_hat[i],
            m_exact[i]
        )?;
    }
    Ok(())
}

fn write_checkpoint_file(dir: &PathBuf, prepared: &Prepared, params: &[f64]) -> Result<(), RunError> {
    let cfg = &prepared.cfg;
    let mut text = format!(
        "minpo-checkpoint-v1 experiment={} method={} seed={}\n",
        cfg.experiment.name(),
        cfg.method.name(),
        cfg.seed
    );
    if let Some(k) = prepared.kappa_hat(params) {
        text.push_str(&format!("kappa {k:.16e}\n"));
    }
    let layout = &prepared.pipeline.layout;
    match &prepared.model {
        Model::Minpo(fields) => {
            text.push_str(&write_checkpoint(
                "memory",
                &fields.memory,
                &params[layout.primary.clone()],
            ));
            if let (Some(inv), Some(r)) = (&fields.inverse, &layout.secondary) {
                text.push_str(&write_checkpoint("inverse", inv, &params[r.clone()]));
            }
        }
        Model::Aux(net) | Model::Fpde(net) => {
            text.push_str(&write_checkpoint("net", net, &params[layout.primary.clone()]));
        }
    }
    std::fs::write(dir.join("checkpoint.txt"), text)?;
    Ok(())
}

fn run_fd(cfg: &RunConfig, t0: Instant) -> Result<RunSummary, RunError> {
    let scheme = match cfg.method {
        Method::FdForward => fd::Scheme::Forward,
        _ => fd::Scheme::Upwind,
    };
    let sol = fd::solve_experiment(cfg.n_x, scheme, cfg.n_i.max(1), 1e-10, 5000)?;
    let (e_u, e_m) = fd::solution_errors(&sol, cfg.n_i.max(1));
    let summary = RunSummary {
        experiment: cfg.experiment.name().into(),
        method: cfg.method.name().into(),
        seed: cfg.seed,
        e_u,
        e_m,
        e_kappa: None,
        kappa_hat: None,
        wall_seconds: t0.elapsed().as_secs_f64(),
        iterations: sol.iterations,
    };
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        write_summary(dir, &summary, Some((scheme.name(), cfg.n_x)))?;
        // Grid fields for plotting.
        let grid = &sol.grid;
        let n = grid.n;
        let mut points = Vec::with_capacity(n * n * n);
        let mut u_hat = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    points.push(vec![grid.coord(i), grid.coord(j), grid.coord(k)]);
                    u_hat.push(grid.u[grid.idx(i, j, k)]);
                }
            }
        }
        let exact_u = metrics::exact_on(&points, &crate::model::AnalyticField::U3d);
        let exact_m = metrics::exact_on(&points, &crate::model::AnalyticField::M3d);
        let m_hat: Vec<f64> = points
            .iter()
            .enumerate()
            .map(|(idx, _)| {
                let k = idx % n;
                let j = (idx / n) % n;
                let i = idx / (n * n);
                fd::fd_memory_eval(grid, &grid.u, (i, j, k), cfg.n_i.max(1))
            })
            .collect();
        write_fields_csv(dir, 3, &points, &u_hat, &exact_u, &m_hat, &exact_m)?;
        let mut log = RunLog::new(Some(dir), &cfg.method)?;
        log.row(
            sol.iterations,
            &LossBreakdown::default(),
            &Metrics { e_u, e_m, e_kappa: None },
        )?;
    }
    Ok(summary)
}

/// Execute one configured run end to end.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let t0 = Instant::now();
    if cfg.method.is_fd() {
        // The oracle self-check guards the shared closed forms either way.
        ExactOracle::new(&cfg.governing_experiment()).self_check(1000, cfg.seed)?;
        return run_fd(cfg, t0);
    }

    let mut prepared = prepare(cfg)?;
    let mut log = RunLog::new(cfg.out.as_ref(), &cfg.method)?;
    let adam_cfg = AdamConfig { lr: cfg.adam_lr, ..AdamConfig::default() };

    let mut params = std::mem::take(&mut prepared.params);
    let log_every = cfg.log_every.max(1);
    let mut log_err: Option<RunError> = None;
    let outcome = {
        let prep_ref = &prepared;
        let log_ref = &mut log;
        let err_ref = &mut log_err;
        let mut observer = |_phase: Phase, iter: usize, bd: &LossBreakdown, p: &[f64]| {
            if iter % log_every == 0 && err_ref.is_none() {
                let m = prep_ref.metrics(p);
                if let Err(e) = log_ref.row(iter, bd, &m) {
                    *err_ref = Some(e);
                }
            }
        };
        train(
            &prepared.pipeline,
            &mut params,
            adam_cfg,
            cfg.adam_iters,
            cfg.lbfgs_iters,
            &mut observer,
        )
    };
    if let Some(e) = log_err {
        return Err(e);
    }

    let final_metrics = prepared.metrics(&params);
    let summary = RunSummary {
        experiment: cfg.experiment.name().into(),
        method: cfg.method.name().into(),
        seed: cfg.seed,
        e_u: final_metrics.e_u,
        e_m: final_metrics.e_m,
        e_kappa: final_metrics.e_kappa,
        kappa_hat: prepared.kappa_hat(&params),
        wall_seconds: t0.elapsed().as_secs_f64(),
        iterations: outcome.iterations,
    };

    if let Some(dir) = &cfg.out {
        log.row(outcome.iterations, &outcome.final_loss, &final_metrics)?;
        drop(log);
        write_checkpoint_file(dir, &prepared, &params)?;
        if outcome.diverged {
            return Err(RunError::Diverged);
        }
        write_summary(dir, &summary, None)?;
        let view = prepared.view(&params);
        let grid = &prepared.grid;
        let u_hat: Vec<f64> = grid.points_u.iter().map(|p| view.u_at(p)).collect();
        let m_hat: Vec<f64> = grid.points_u.iter().map(|p| view.m_at(p)).collect();
        let exact_m_field = prepared.spec.experiment.exact_m();
        let exact_m = metrics::exact_on(&grid.points_u, &exact_m_field);
        write_fields_csv(
            dir,
            prepared.spec.experiment.dim(),
            &grid.points_u,
            &u_hat,
            &grid.exact_u,
            &m_hat,
            &exact_m,
        )?;
    } else if outcome.diverged {
        return Err(RunError::Diverged);
    }
    Ok(summary)
}
