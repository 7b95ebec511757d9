//! Argument and configuration-file handling for the experiment runner.
//!
//! Configuration files are flat `key = value` text (one key per line, `#`
//! comments); keys use the same names as the long CLI flags with underscores.
//! Command-line flags override file values, which override the experiment's
//! defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Parser;

use minpo::exp::{ExperimentId, Method, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "expcli", about = "Run one nonlocal-IDE experiment")]
pub struct CliArgs {
    /// Experiment: exp1-forward | exp1-inverse | exp2 | exp3.
    #[arg(long)]
    pub experiment: Option<String>,
    /// Method: minpo-kan | minpo-mlp | apinn | apikan | fpinn | fpikan |
    /// fd-forward | fd-upwind.
    #[arg(long)]
    pub method: Option<String>,
    /// Flat key=value configuration file; CLI flags win on conflict.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Temporal domain length of exp1.
    #[arg(long)]
    pub a_len: Option<f64>,
    #[arg(long)]
    pub n_res: Option<usize>,
    #[arg(long)]
    pub n_i: Option<usize>,
    #[arg(long)]
    pub n_t: Option<usize>,
    #[arg(long)]
    pub n_meas: Option<usize>,
    #[arg(long)]
    pub n_mem: Option<usize>,
    #[arg(long)]
    pub n_data: Option<usize>,
    /// FD grid nodes per axis (exp2 fd-* methods).
    #[arg(long)]
    pub n_x: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub adam_iters: Option<usize>,
    #[arg(long)]
    pub lbfgs_iters: Option<usize>,
    #[arg(long)]
    pub adam_lr: Option<f64>,
    #[arg(long)]
    pub lambda_ide: Option<f64>,
    #[arg(long)]
    pub lambda_data: Option<f64>,
    #[arg(long)]
    pub lambda_mem: Option<f64>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Comma-separated hidden widths; the run picks the entry whose
    /// parameter count is closest to n_res.
    #[arg(long)]
    pub width_ladder: Option<String>,
    /// Output directory for run.csv, summary.csv, fields.csv, checkpoint.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse a flat key=value file into a map.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_as<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, String> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| format!("bad value for {key}: {v}")),
    }
}

fn parse_ladder(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad width-ladder entry: {part}"))
        })
        .collect()
}

/// Resolve defaults, file values and CLI flags into a run configuration.
pub fn build_config(args: &CliArgs) -> Result<RunConfig, String> {
    let file = match &args.config {
        None => BTreeMap::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_config_file(&text)?
        }
    };

    let experiment_name = args
        .experiment
        .clone()
        .or_else(|| file.get("experiment").cloned())
        .ok_or("missing --experiment")?;
    let method_name = args
        .method
        .clone()
        .or_else(|| file.get("method").cloned())
        .ok_or("missing --method")?;
    let experiment = ExperimentId::parse(&experiment_name)
        .ok_or_else(|| format!("unknown experiment: {experiment_name}"))?;
    let method =
        Method::parse(&method_name).ok_or_else(|| format!("unknown method: {method_name}"))?;

    let mut cfg = RunConfig::defaults(experiment, method);

    macro_rules! apply {
        ($field:ident, $key:literal) => {
            if let Some(v) = parse_as(&file, $key)? {
                cfg.$field = v;
            }
            if let Some(v) = args.$field {
                cfg.$field = v;
            }
        };
    }
    apply!(width, "width");
    apply!(depth, "depth");
    apply!(degree, "degree");
    apply!(kappa, "kappa");
    apply!(a_len, "a_len");
    apply!(n_res, "n_res");
    apply!(n_i, "n_i");
    apply!(n_t, "n_t");
    apply!(n_meas, "n_meas");
    apply!(n_mem, "n_mem");
    apply!(n_data, "n_data");
    apply!(n_x, "n_x");
    apply!(seed, "seed");
    apply!(adam_iters, "adam_iters");
    apply!(lbfgs_iters, "lbfgs_iters");
    apply!(adam_lr, "adam_lr");
    apply!(lambda_ide, "lambda_ide");
    apply!(lambda_data, "lambda_data");
    apply!(lambda_mem, "lambda_mem");
    apply!(log_every, "log_every");

    if let Some(v) = parse_as::<f64>(&file, "alpha")? {
        cfg.alpha = Some(v);
    }
    if let Some(v) = args.alpha {
        cfg.alpha = Some(v);
    }
    if let Some(s) = file.get("width_ladder") {
        cfg.width_ladder = Some(parse_ladder(s)?);
    }
    if let Some(s) = &args.width_ladder {
        cfg.width_ladder = Some(parse_ladder(s)?);
    }
    if let Some(s) = file.get("out") {
        cfg.out = Some(PathBuf::from(s));
    }
    if let Some(p) = &args.out {
        cfg.out = Some(p.clone());
    }

    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args_from(list: &[&str]) -> CliArgs {
        CliArgs::parse_from(std::iter::once("expcli").chain(list.iter().copied()))
    }

    #[test]
    fn defaults_follow_published_architectures() {
        let cfg = build_config(&args_from(&["--experiment", "exp1-forward", "--method", "minpo-kan"]))
            .unwrap();
        assert_eq!(cfg.width, 15);
        assert_eq!(cfg.degree, 4);
        assert_eq!(cfg.n_res, 2400);
        let cfg = build_config(&args_from(&["--experiment", "exp2", "--method", "minpo-mlp"]))
            .unwrap();
        assert_eq!(cfg.width, 21);
        assert_eq!(cfg.n_i, 10);
    }

    #[test]
    fn cli_overrides_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(
            &path,
            "# comment line\nexperiment = exp1-forward\nmethod = minpo-kan\nn_res = 111\nseed = 9\n",
        )
        .unwrap();
        let cfg = build_config(&args_from(&[
            "--config",
            path.to_str().unwrap(),
            "--n-res",
            "222",
        ]))
        .unwrap();
        assert_eq!(cfg.n_res, 222); // CLI wins
        assert_eq!(cfg.seed, 9); // file beats default
    }

    #[test]
    fn incompatible_method_is_rejected() {
        let err = build_config(&args_from(&["--experiment", "exp1-forward", "--method", "fd-upwind"]))
            .unwrap_err();
        assert!(err.contains("exp2"), "{err}");
        let err = build_config(&args_from(&["--experiment", "exp2", "--method", "fpikan"]))
            .unwrap_err();
        assert!(err.contains("exp3"), "{err}");
    }

    #[test]
    fn alpha_rules() {
        // exp3 default supplies alpha; removing it must fail.
        let cfg =
            build_config(&args_from(&["--experiment", "exp3", "--method", "minpo-kan"])).unwrap();
        assert_eq!(cfg.alpha, Some(0.5));
        let err = build_config(&args_from(&[
            "--experiment",
            "exp1-forward",
            "--method",
            "minpo-kan",
            "--alpha",
            "0.5",
        ]))
        .unwrap_err();
        assert!(err.contains("alpha"), "{err}");
    }
}
