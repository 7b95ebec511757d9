//! Training pipelines: per-point computations recorded once into programs,
//! then replayed over parallel lane chunks at every iteration.
//!
//! A pipeline owns a handful of batches (residual, data, consistency pieces).
//! One loss/gradient evaluation runs three stages:
//!
//! 1. forward pass over every batch collecting per-lane outputs,
//! 2. loss assembly: mean-squared components plus the quadrature/L1
//!    combinations of the consistency term, producing adjoint seeds,
//! 3. seeded forward+reverse pass accumulating parameter gradients.
//!
//! Quadrature nodes, L1 weights and source values enter the assembly as
//! constants, so gradients flow only through field evaluations, and chunk
//! results are reduced in deterministic order.

use rayon::prelude::*;

use crate::baselines::{aux_residual, AuxSystem};
use crate::diffkit::{ChunkBuf, Program, Taylor, Var, CHUNK};
use crate::encoders::FieldDef;
use crate::fractional::caputo_l1_weights;
use crate::model::{
    ide_residual_at, u_theta_at, EncoderField, Experiment, LossBreakdown, LossWeights,
    MemoryDataset, MemoryFields, ProblemSpec,
};
use crate::optim::{AdamConfig, AdamState, LbfgsConfig, LbfgsState, StepOutcome};
use crate::scalar::Scalar;

use super::sample::{DataTag, Datasets};

/// Slices of the flat trainable vector.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub primary: std::ops::Range<usize>,
    pub secondary: Option<std::ops::Range<usize>>,
    pub kappa: Option<usize>,
    pub total: usize,
}

impl ParamLayout {
    fn new(primary: usize, secondary: Option<usize>, kappa: bool) -> Self {
        let sec = secondary.map(|n| primary..primary + n);
        let after = sec.as_ref().map_or(primary, |r| r.end);
        let kappa_idx = kappa.then_some(after);
        ParamLayout {
            primary: 0..primary,
            secondary: sec,
            kappa: kappa_idx,
            total: after + usize::from(kappa),
        }
    }
}

/// How a batch obtains its adjoint seeds.
pub enum SeedMode {
    /// Every output stream enters a mean-squared component with its own
    /// scale: `seed = coef * output`. Forward, seeding and reverse fuse into
    /// one pass per chunk; the per-stream sums of squares come back too.
    SelfMse,
    /// Seeds depend on other batches (quadrature/L1 coupling); computed by
    /// the assembler from a value-only pass.
    Deferred,
}

/// A recorded program plus its fixed lane inputs.
pub struct Batch {
    pub prog: Program,
    pub inputs: Vec<Vec<f64>>,
    pub n_lanes: usize,
    pub seed_mode: SeedMode,
}

impl Batch {
    fn new(prog: Program, inputs: Vec<Vec<f64>>, seed_mode: SeedMode) -> Self {
        let n_lanes = inputs.first().map_or(0, Vec::len);
        debug_assert!(inputs.iter().all(|v| v.len() == n_lanes));
        debug_assert_eq!(inputs.len(), prog.n_inputs());
        Batch { prog, inputs, n_lanes, seed_mode }
    }
}

/// Consistency-term assembly recipe.
pub enum MemAssembly {
    /// Folded quadrature weights per outer point; `anchor` appends one extra
    /// memory-field lane pinned to zero (the vanishing Volterra integral).
    Quadrature { weights: Vec<Vec<f64>>, anchor: bool },
    /// L1 rows per grid step; lanes are x-major over the temporal grid.
    L1 { rows: Vec<Vec<f64>>, n_x: usize, n_t: usize },
}

pub enum PipelineKind {
    /// Batches: `[residual, data, mem_field, mem_solution]`.
    Minpo { mem: MemAssembly },
    /// Batches: `[residual, data...]`; residual stream 0 is the governing
    /// equation, the rest are auxiliary-evolution residuals.
    Aux { n_aux: usize, data_count: usize },
    /// Batches: `[grid_solution, laplacian, data]`.
    Fpde { rows: Vec<Vec<f64>>, source: Vec<f64>, n_x: usize, n_t: usize },
}

pub struct Pipeline {
    pub batches: Vec<Batch>,
    pub kind: PipelineKind,
    pub weights: LossWeights,
    pub layout: ParamLayout,
}

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(CHUNK).map(|s| (s, (n - s).min(CHUNK))).collect()
}

/// Forward pass over all lanes; returns stream-major outputs.
fn forward_outputs(batch: &Batch, params: &[f64]) -> Vec<Vec<f64>> {
    let n_out = batch.prog.n_outputs();
    let n = batch.n_lanes;
    if n == 0 {
        return vec![Vec::new(); n_out];
    }
    let inputs: Vec<&[f64]> = batch.inputs.iter().map(|v| v.as_slice()).collect();
    let ranges = chunk_ranges(n);
    let per_chunk: Vec<Vec<f64>> = ranges
        .par_iter()
        .map_init(
            || {
                let mut buf = ChunkBuf::for_program(&batch.prog);
                batch.prog.fill_params(params, &mut buf);
                buf
            },
            |buf, &(lane0, cn)| {
                batch.prog.forward_chunk(&inputs, lane0, cn, buf);
                let mut out = vec![0.0; n_out * cn];
                for o in 0..n_out {
                    for c in 0..cn {
                        out[o * cn + c] = batch.prog.output(buf, o, c);
                    }
                }
                out
            },
        )
        .collect();
    let mut mat = vec![vec![0.0; n]; n_out];
    for (&(lane0, cn), chunk_out) in ranges.iter().zip(&per_chunk) {
        for o in 0..n_out {
            mat[o][lane0..lane0 + cn].copy_from_slice(&chunk_out[o * cn..(o + 1) * cn]);
        }
    }
    mat
}

/// Fused pass for self-seeded mean-squared batches: forward, seed with
/// `coefs[o] * out`, reverse. Returns the per-stream sums of squares.
fn fused_mse_pass(batch: &Batch, params: &[f64], coefs: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let n = batch.n_lanes;
    let n_out = batch.prog.n_outputs();
    if n == 0 {
        return vec![0.0; n_out];
    }
    let inputs: Vec<&[f64]> = batch.inputs.iter().map(|v| v.as_slice()).collect();
    let ranges = chunk_ranges(n);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = ranges
        .par_iter()
        .map_init(
            || {
                let mut buf = ChunkBuf::for_program(&batch.prog);
                batch.prog.fill_params(params, &mut buf);
                buf
            },
            |buf, &(lane0, cn)| {
                batch.prog.forward_chunk(&inputs, lane0, cn, buf);
                let mut seeds = vec![[0.0; CHUNK]; n_out];
                let mut sq = vec![0.0; n_out];
                for o in 0..n_out {
                    for c in 0..cn {
                        let r = batch.prog.output(buf, o, c);
                        sq[o] += r * r;
                        seeds[o][c] = coefs[o] * r;
                    }
                }
                let mut g = vec![0.0; params.len()];
                batch.prog.reverse_chunk(&seeds, buf, &mut g);
                (g, sq)
            },
        )
        .collect();
    let mut sums = vec![0.0; n_out];
    for (g, sq) in partials {
        for (gi, pi) in grad.iter_mut().zip(&g) {
            *gi += pi;
        }
        for (s, q) in sums.iter_mut().zip(&sq) {
            *s += q;
        }
    }
    sums
}

/// Seeded forward+reverse pass; accumulates parameter gradients in
/// deterministic chunk order.
fn backward_accumulate(batch: &Batch, params: &[f64], seeds: &[Vec<f64>], grad: &mut [f64]) {
    let n = batch.n_lanes;
    if n == 0 {
        return;
    }
    let n_out = batch.prog.n_outputs();
    let inputs: Vec<&[f64]> = batch.inputs.iter().map(|v| v.as_slice()).collect();
    let ranges = chunk_ranges(n);
    let partials: Vec<Vec<f64>> = ranges
        .par_iter()
        .map_init(
            || {
                let mut buf = ChunkBuf::for_program(&batch.prog);
                batch.prog.fill_params(params, &mut buf);
                buf
            },
            |buf, &(lane0, cn)| {
                batch.prog.forward_chunk(&inputs, lane0, cn, buf);
                let mut chunk_seeds = vec![[0.0; CHUNK]; n_out];
                for o in 0..n_out {
                    for c in 0..cn {
                        chunk_seeds[o][c] = seeds[o][lane0 + c];
                    }
                }
                let mut g = vec![0.0; params.len()];
                batch.prog.reverse_chunk(&chunk_seeds, buf, &mut g);
                g
            },
        )
        .collect();
    for p in partials {
        for (gi, pi) in grad.iter_mut().zip(&p) {
            *gi += pi;
        }
    }
}

fn mse(r: &[f64]) -> f64 {
    if r.is_empty() {
        0.0
    } else {
        r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
    }
}

impl Pipeline {
    /// Per-stream seed coefficients of the self-seeded batches:
    /// `d(total)/d(out) = coef * out` for mean-squared components.
    fn mse_coefs(&self, batch: usize) -> Vec<f64> {
        let w = &self.weights;
        let b = &self.batches[batch];
        let n = b.n_lanes.max(1) as f64;
        match &self.kind {
            PipelineKind::Minpo { .. } => match batch {
                0 => vec![w.ide * 2.0 / n],
                1 => vec![w.data * 2.0 / n],
                _ => unreachable!("consistency batches are deferred"),
            },
            PipelineKind::Aux { n_aux, data_count } => {
                if batch == 0 {
                    let mut coefs = vec![w.ide * 2.0 / n];
                    let aux_n = (*n_aux as f64) * n;
                    coefs.extend(std::iter::repeat(w.mem * 2.0 / aux_n).take(*n_aux));
                    coefs
                } else {
                    vec![w.data * 2.0 / (*data_count).max(1) as f64; b.prog.n_outputs()]
                }
            }
            PipelineKind::Fpde { .. } => vec![w.data * 2.0 / n],
        }
    }

    /// Mean-squared component values from fused-pass square sums.
    fn combine(
        &self,
        sq: &[Option<Vec<f64>>],
        deferred_ide: f64,
        deferred_mem: f64,
    ) -> LossBreakdown {
        let w = &self.weights;
        let (mut ide, mut data, mut mem) = (deferred_ide, 0.0, deferred_mem);
        match &self.kind {
            PipelineKind::Minpo { .. } => {
                ide += sq[0].as_ref().unwrap()[0] / self.batches[0].n_lanes.max(1) as f64;
                data += sq[1].as_ref().unwrap()[0] / self.batches[1].n_lanes.max(1) as f64;
            }
            PipelineKind::Aux { n_aux, data_count } => {
                let res_sq = sq[0].as_ref().unwrap();
                let n = self.batches[0].n_lanes.max(1) as f64;
                ide += res_sq[0] / n;
                mem += res_sq[1..].iter().sum::<f64>() / ((*n_aux).max(1) as f64 * n);
                let mut dsum = 0.0;
                for q in sq.iter().skip(1).flatten() {
                    dsum += q.iter().sum::<f64>();
                }
                data += dsum / (*data_count).max(1) as f64;
            }
            PipelineKind::Fpde { .. } => {
                data += sq[2].as_ref().unwrap()[0] / self.batches[2].n_lanes.max(1) as f64;
            }
        }
        let total = w.ide * ide + w.data * data + w.mem * mem;
        LossBreakdown { ide, data, mem, total }
    }
}

/// Residuals of the coupled (quadrature/L1) parts from the value pass.
/// Returns `(ide_part, mem_part)` plus, when requested, the seed matrices of
/// the deferred batches keyed by batch index.
fn assemble_deferred(
    pipe: &Pipeline,
    outs: &[Option<Vec<Vec<f64>>>],
    want_seeds: bool,
) -> (f64, f64, Vec<Option<Vec<Vec<f64>>>>) {
    let w = &pipe.weights;
    let mut seeds: Vec<Option<Vec<Vec<f64>>>> = pipe.batches.iter().map(|_| None).collect();
    match &pipe.kind {
        PipelineKind::Minpo { mem } => {
            let m_out = &outs[2].as_ref().unwrap()[0];
            let u_out = &outs[3].as_ref().unwrap()[0];
            let mut m_seed = vec![0.0; m_out.len()];
            let mut u_seed = vec![0.0; u_out.len()];
            let mem_val = match mem {
                MemAssembly::Quadrature { weights, anchor } => {
                    let n_outer = weights.len();
                    let per = if n_outer == 0 { 0 } else { u_out.len() / n_outer };
                    let nf = n_outer.max(1) as f64;
                    let mut fit = 0.0;
                    for (p, wrow) in weights.iter().enumerate() {
                        let base = p * per;
                        let integral: f64 = wrow
                            .iter()
                            .enumerate()
                            .map(|(j, wj)| wj * u_out[base + j])
                            .sum();
                        let r = m_out[p] - integral;
                        fit += r * r;
                        if want_seeds {
                            let coef = w.mem * 2.0 * r / nf;
                            m_seed[p] = coef;
                            for (j, wj) in wrow.iter().enumerate() {
                                u_seed[base + j] = -coef * wj;
                            }
                        }
                    }
                    let mut total = fit / nf;
                    if *anchor {
                        let r = m_out[n_outer];
                        total += r * r;
                        if want_seeds {
                            m_seed[n_outer] = w.mem * 2.0 * r;
                        }
                    }
                    total
                }
                MemAssembly::L1 { rows, n_x, n_t } => {
                    let count = (n_x * n_t).max(1) as f64;
                    let mut fit = 0.0;
                    for sx in 0..*n_x {
                        let u_base = sx * (n_t + 1);
                        let m_base = sx * n_t;
                        for nn in 1..=*n_t {
                            let row = &rows[nn - 1];
                            let l1: f64 = row
                                .iter()
                                .enumerate()
                                .map(|(k, wk)| wk * u_out[u_base + k])
                                .sum();
                            let r = m_out[m_base + nn - 1] - l1;
                            fit += r * r;
                            if want_seeds {
                                let coef = w.mem * 2.0 * r / count;
                                m_seed[m_base + nn - 1] = coef;
                                for (k, wk) in row.iter().enumerate() {
                                    u_seed[u_base + k] -= coef * wk;
                                }
                            }
                        }
                    }
                    fit / count
                }
            };
            if want_seeds {
                seeds[2] = Some(vec![m_seed]);
                seeds[3] = Some(vec![u_seed]);
            }
            (0.0, mem_val, seeds)
        }
        PipelineKind::Aux { .. } => (0.0, 0.0, seeds),
        PipelineKind::Fpde { rows, source, n_x, n_t } => {
            let gu = &outs[0].as_ref().unwrap()[0];
            let lap = &outs[1].as_ref().unwrap()[0];
            let mut gu_seed = vec![0.0; gu.len()];
            let mut lap_seed = vec![0.0; lap.len()];
            let count = (n_x * n_t).max(1) as f64;
            let mut sq = 0.0;
            for sx in 0..*n_x {
                let u_base = sx * (n_t + 1);
                let g_base = sx * n_t;
                for nn in 1..=*n_t {
                    let row = &rows[nn - 1];
                    let l1: f64 = row
                        .iter()
                        .enumerate()
                        .map(|(k, wk)| wk * gu[u_base + k])
                        .sum();
                    let r = l1 - lap[g_base + nn - 1] - source[g_base + nn - 1];
                    sq += r * r;
                    if want_seeds {
                        let coef = w.ide * 2.0 * r / count;
                        for (k, wk) in row.iter().enumerate() {
                            gu_seed[u_base + k] += coef * wk;
                        }
                        lap_seed[g_base + nn - 1] = -coef;
                    }
                }
            }
            if want_seeds {
                seeds[0] = Some(vec![gu_seed]);
                seeds[1] = Some(vec![lap_seed]);
            }
            (sq / count, 0.0, seeds)
        }
    }
}

fn deferred_outputs(pipe: &Pipeline, params: &[f64]) -> Vec<Option<Vec<Vec<f64>>>> {
    pipe.batches
        .iter()
        .map(|b| match b.seed_mode {
            SeedMode::Deferred => Some(forward_outputs(b, params)),
            SeedMode::SelfMse => None,
        })
        .collect()
}

/// Full-batch loss and gradient of the weighted total.
pub fn loss_and_grad(pipe: &Pipeline, params: &[f64], grad: &mut [f64]) -> LossBreakdown {
    debug_assert_eq!(params.len(), pipe.layout.total);
    grad.iter_mut().for_each(|g| *g = 0.0);
    let outs = deferred_outputs(pipe, params);
    let (d_ide, d_mem, seeds) = assemble_deferred(pipe, &outs, true);
    let mut sq: Vec<Option<Vec<f64>>> = pipe.batches.iter().map(|_| None).collect();
    for (i, batch) in pipe.batches.iter().enumerate() {
        match batch.seed_mode {
            SeedMode::SelfMse => {
                let coefs = pipe.mse_coefs(i);
                sq[i] = Some(fused_mse_pass(batch, params, &coefs, grad));
            }
            SeedMode::Deferred => {
                backward_accumulate(batch, params, seeds[i].as_ref().unwrap(), grad);
            }
        }
    }
    pipe.combine(&sq, d_ide, d_mem)
}

/// Loss components without gradients (used by logging).
pub fn loss_only(pipe: &Pipeline, params: &[f64]) -> LossBreakdown {
    let outs = deferred_outputs(pipe, params);
    let (d_ide, d_mem, _) = assemble_deferred(pipe, &outs, false);
    let mut sq: Vec<Option<Vec<f64>>> = pipe.batches.iter().map(|_| None).collect();
    for (i, batch) in pipe.batches.iter().enumerate() {
        if matches!(batch.seed_mode, SeedMode::SelfMse) {
            let m = forward_outputs(batch, params);
            sq[i] = Some(m.iter().map(|stream| stream.iter().map(|r| r * r).sum()).collect());
        }
    }
    pipe.combine(&sq, d_ide, d_mem)
}

fn encoder_fields<'a>(
    layout: &ParamLayout,
    fields: &'a MemoryFields,
    p: &'a [Var],
) -> (EncoderField<'a, Var>, Option<EncoderField<'a, Var>>) {
    let m = EncoderField { def: &fields.memory, params: &p[layout.primary.clone()] };
    let j = match (&fields.inverse, &layout.secondary) {
        (Some(def), Some(r)) => Some(EncoderField { def, params: &p[r.clone()] }),
        _ => None,
    };
    (m, j)
}

fn kappa_var(layout: &ParamLayout, ex: &Experiment, p: &[Var]) -> Var {
    match layout.kappa {
        Some(i) => p[i],
        None => Var::from_f64(ex.kappa()),
    }
}

/// Build the learned-operator pipeline for any of the three experiments.
pub fn build_minpo_pipeline(
    spec: &ProblemSpec,
    fields: &MemoryFields,
    ds: &Datasets,
) -> Pipeline {
    let ex = &spec.experiment;
    let dim = ex.dim();
    let layout = ParamLayout::new(
        fields.memory.param_count(),
        fields.inverse.as_ref().map(FieldDef::param_count),
        spec.trainable_kappa.is_some(),
    );

    let residual_prog = Program::record(layout.total, dim, |p, xi| {
        let (m, j) = encoder_fields(&layout, fields, p);
        let kappa = kappa_var(&layout, ex, p);
        vec![ide_residual_at(ex, &m, j.as_ref(), kappa, xi)]
    });
    let residual_inputs = columns(&ds.residual, dim);
    // Structural check: the continuous residual sees coordinates only, never
    // quadrature nodes or weights.
    debug_assert_eq!(residual_prog.n_inputs(), dim);

    let data_prog = Program::record(layout.total, dim + 1, |p, inp| {
        let (m, j) = encoder_fields(&layout, fields, p);
        let u = u_theta_at(spec.reconstruction, &m, j.as_ref(), &inp[..dim]);
        vec![u - inp[dim]]
    });
    let (data_pts, data_tg) = ds.data_flat();
    let mut data_inputs = columns(&data_pts, dim);
    data_inputs.push(data_tg);

    let m_prog = Program::record(layout.total, dim, |p, xi| {
        let (m, _) = encoder_fields(&layout, fields, p);
        vec![m.def.eval(m.params, xi)]
    });
    let u_prog = Program::record(layout.total, dim, |p, xi| {
        let (m, j) = encoder_fields(&layout, fields, p);
        vec![u_theta_at(spec.reconstruction, &m, j.as_ref(), xi)]
    });

    let (m_inputs, u_inputs, mem) = match &ds.mem {
        MemoryDataset::Volterra { outer_t, rule } => {
            let mut weights = Vec::with_capacity(outer_t.len());
            let mut taus = Vec::new();
            for &t in outer_t {
                let mut row = Vec::with_capacity(rule.len());
                for (tau, wq) in rule.mapped(0.0, t) {
                    row.push(wq * Experiment::kernel(tau, t));
                    taus.push(tau);
                }
                weights.push(row);
            }
            let mut m_in = outer_t.clone();
            m_in.push(0.0); // anchor lane
            (vec![m_in], vec![taus], MemAssembly::Quadrature { weights, anchor: true })
        }
        MemoryDataset::Nested3d { outer, rule } => {
            let mut weights = Vec::with_capacity(outer.len());
            let mut y1s = Vec::new();
            let mut y2s = Vec::new();
            let mut taus = Vec::new();
            for &[x1, x2, t] in outer {
                let mut row = Vec::with_capacity(rule.len().pow(3));
                for (y1, w1) in rule.mapped(0.0, x1) {
                    for (y2, w2) in rule.mapped(0.0, x2) {
                        for (tau, wt) in rule.mapped(0.0, t) {
                            row.push(w1 * w2 * wt * Experiment::kernel(tau, t));
                            y1s.push(y1);
                            y2s.push(y2);
                            taus.push(tau);
                        }
                    }
                }
                weights.push(row);
            }
            let m_in = columns_arr(outer);
            (m_in, vec![y1s, y2s, taus], MemAssembly::Quadrature { weights, anchor: false })
        }
        MemoryDataset::Fractional { xs, n_t, alpha } => {
            let dt = 1.0 / *n_t as f64;
            let rows: Vec<Vec<f64>> = (1..=*n_t)
                .map(|n| caputo_l1_weights(*alpha, dt, n).expect("valid L1 configuration"))
                .collect();
            let mut m_x = Vec::new();
            let mut m_t = Vec::new();
            let mut u_x = Vec::new();
            let mut u_t = Vec::new();
            for &x in xs {
                for n in 1..=*n_t {
                    m_x.push(x);
                    m_t.push(n as f64 * dt);
                }
                for k in 0..=*n_t {
                    u_x.push(x);
                    u_t.push(k as f64 * dt);
                }
            }
            (
                vec![m_x, m_t],
                vec![u_x, u_t],
                MemAssembly::L1 { rows, n_x: xs.len(), n_t: *n_t },
            )
        }
    };

    Pipeline {
        batches: vec![
            Batch::new(residual_prog, residual_inputs, SeedMode::SelfMse),
            Batch::new(data_prog, data_inputs, SeedMode::SelfMse),
            Batch::new(m_prog, m_inputs, SeedMode::Deferred),
            Batch::new(u_prog, u_inputs, SeedMode::Deferred),
        ],
        kind: PipelineKind::Minpo { mem },
        weights: spec.weights,
        layout,
    }
}

/// Build the auxiliary-field baseline pipeline (Volterra or 3D experiment).
pub fn build_aux_pipeline(spec: &ProblemSpec, net: &FieldDef, ds: &Datasets) -> Pipeline {
    let ex = &spec.experiment;
    let dim = ex.dim();
    let sys = match ex {
        Experiment::Volterra { .. } => AuxSystem::Volterra,
        Experiment::Nonlocal3d => AuxSystem::Nonlocal3d,
        Experiment::FracDiffusion { .. } => {
            unreachable!("auxiliary baselines target the classical experiments")
        }
    };
    let layout = ParamLayout::new(net.param_count(), None, spec.trainable_kappa.is_some());

    let residual_prog = Program::record(layout.total, dim, |p, xi| {
        let field = EncoderField { def: net, params: &p[layout.primary.clone()] };
        let kappa = kappa_var(&layout, ex, p);
        aux_residual(sys, &field, kappa, xi)
    });
    let mut batches =
        vec![Batch::new(residual_prog, columns(&ds.residual, dim), SeedMode::SelfMse)];

    for group in &ds.data_groups {
        // Which auxiliary output vanishes on this face, if any.
        let anchor: Option<usize> = match (sys, group.tag) {
            (AuxSystem::Volterra, DataTag::InitialPlane) => Some(1),
            (AuxSystem::Nonlocal3d, DataTag::InitialPlane) => Some(1),
            (AuxSystem::Nonlocal3d, DataTag::FaceX1Zero) => Some(2),
            (AuxSystem::Nonlocal3d, DataTag::FaceX2Zero) => Some(3),
            _ => None,
        };
        let prog = Program::record(layout.total, dim + 1, |p, inp| {
            let field = EncoderField { def: net, params: &p[layout.primary.clone()] };
            let outs = field.def.eval_multi(field.params, &inp[..dim]);
            let mut res = vec![outs[0] - inp[dim]];
            if let Some(a) = anchor {
                res.push(outs[a]);
            }
            res
        });
        let mut inputs = columns(&group.points, dim);
        inputs.push(group.targets.clone());
        batches.push(Batch::new(prog, inputs, SeedMode::SelfMse));
    }
    let data_count: usize = batches[1..]
        .iter()
        .map(|b| b.n_lanes * b.prog.n_outputs())
        .sum();

    Pipeline {
        batches,
        kind: PipelineKind::Aux { n_aux: sys.n_residuals() - 1, data_count },
        weights: spec.weights,
        layout,
    }
}

/// Build the discretized-residual fractional baseline pipeline.
pub fn build_fpde_pipeline(spec: &ProblemSpec, net: &FieldDef, ds: &Datasets) -> Pipeline {
    let ex = &spec.experiment;
    let alpha = match ex {
        Experiment::FracDiffusion { alpha } => *alpha,
        _ => unreachable!("discretized-residual baselines target the fractional experiment"),
    };
    let n_t = spec.sizes.n_t;
    let dt = 1.0 / n_t as f64;
    let layout = ParamLayout::new(net.param_count(), None, false);

    let value_prog = Program::record(layout.total, 2, |p, xi| {
        let field = EncoderField { def: net, params: &p[layout.primary.clone()] };
        vec![field.def.eval(field.params, xi)]
    });
    let lap_prog = Program::record(layout.total, 2, |p, xi| {
        let field = EncoderField { def: net, params: &p[layout.primary.clone()] };
        let uj = field
            .def
            .eval(field.params, &[Taylor::<Var, 3>::var(xi[0]), Taylor::constant(xi[1])]);
        vec![uj.coeff(2) * Var::from_f64(2.0)]
    });
    let data_prog = Program::record(layout.total, 3, |p, inp| {
        let field = EncoderField { def: net, params: &p[layout.primary.clone()] };
        vec![field.def.eval(field.params, &inp[..2]) - inp[2]]
    });

    let xs = &ds.fpde_xs;
    let mut gu_x = Vec::new();
    let mut gu_t = Vec::new();
    let mut lp_x = Vec::new();
    let mut lp_t = Vec::new();
    let mut source = Vec::new();
    for &x in xs {
        for k in 0..=n_t {
            gu_x.push(x);
            gu_t.push(k as f64 * dt);
        }
        for n in 1..=n_t {
            let t = n as f64 * dt;
            lp_x.push(x);
            lp_t.push(t);
            source.push(ex.source(&[x, t]));
        }
    }
    let rows: Vec<Vec<f64>> = (1..=n_t)
        .map(|n| caputo_l1_weights(alpha, dt, n).expect("valid L1 configuration"))
        .collect();

    let (data_pts, data_tg) = ds.data_flat();
    let mut data_inputs = columns(&data_pts, 2);
    data_inputs.push(data_tg);

    Pipeline {
        batches: vec![
            Batch::new(value_prog, vec![gu_x, gu_t], SeedMode::Deferred),
            Batch::new(lap_prog, vec![lp_x, lp_t], SeedMode::Deferred),
            Batch::new(data_prog, data_inputs, SeedMode::SelfMse),
        ],
        kind: PipelineKind::Fpde { rows, source, n_x: xs.len(), n_t },
        weights: spec.weights,
        layout,
    }
}

fn columns(points: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|d| points.iter().map(|p| p[d]).collect())
        .collect()
}

fn columns_arr(points: &[[f64; 3]]) -> Vec<Vec<f64>> {
    (0..3)
        .map(|d| points.iter().map(|p| p[d]).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub iterations: usize,
    pub diverged: bool,
    pub final_loss: LossBreakdown,
}

/// Two-phase schedule: `adam_iters` full-batch Adam steps, then up to
/// `lbfgs_iters` L-BFGS steps with the strong Wolfe line search. The observer
/// sees every iteration with the current loss components and parameters.
pub fn train(
    pipe: &Pipeline,
    params: &mut Vec<f64>,
    adam_cfg: AdamConfig,
    adam_iters: usize,
    lbfgs_iters: usize,
    observer: &mut dyn FnMut(Phase, usize, &LossBreakdown, &[f64]),
) -> TrainOutcome {
    let mut grad = vec![0.0; params.len()];
    let mut adam = AdamState::new(params.len(), adam_cfg);
    let mut last = LossBreakdown::default();
    for it in 0..adam_iters {
        let bd = loss_and_grad(pipe, params, &mut grad);
        if !bd.total.is_finite() {
            return TrainOutcome { iterations: it, diverged: true, final_loss: bd };
        }
        last = bd;
        if adam.step(params, &grad).is_err() {
            return TrainOutcome { iterations: it, diverged: true, final_loss: bd };
        }
        observer(Phase::Adam, it, &bd, params);
    }

    let mut lbfgs = LbfgsState::new(LbfgsConfig::default());
    let mut iterations = adam_iters;
    for it in 0..lbfgs_iters {
        let mut bd_cell = LossBreakdown::default();
        let outcome = {
            let bd_ref = &mut bd_cell;
            lbfgs.step(params, |x, g| {
                let bd = loss_and_grad(pipe, x, g);
                *bd_ref = bd;
                bd.total
            })
        };
        iterations = adam_iters + it + 1;
        match outcome {
            StepOutcome::Accepted { .. } => {
                if !bd_cell.total.is_finite() {
                    return TrainOutcome { iterations, diverged: true, final_loss: bd_cell };
                }
                last = bd_cell;
                observer(Phase::Lbfgs, adam_iters + it, &last, params);
            }
            StepOutcome::Converged | StepOutcome::LineSearchFailed => break,
        }
    }
    TrainOutcome { iterations, diverged: false, final_loss: last }
}
