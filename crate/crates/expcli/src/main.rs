//! Command-line experiment runner.
//!
//! One invocation executes one run: pick an experiment and a method, optional
//! overrides for architecture, dataset sizes, schedule and seeds, and an
//! output directory for the CSV/checkpoint artifacts. Defaults follow the
//! published configuration of each experiment.
//!
//! Exit codes: 0 success, 1 configuration error, 2 training divergence.

use std::process::ExitCode;

use clap::Parser;

use expcli::{build_config, CliArgs};
use minpo::exp::{run_experiment, RunError};

fn main() -> ExitCode {
    let args = CliArgs::parse();
    let cfg = match build_config(&args) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    match run_experiment(&cfg) {
        Ok(summary) => {
            println!(
                "{} {} seed={} e_u={:.4e} e_M={:.4e}{} wall={:.1}s iters={}",
                summary.experiment,
                summary.method,
                summary.seed,
                summary.e_u,
                summary.e_m,
                summary
                    .e_kappa
                    .map_or(String::new(), |e| format!(" e_kappa={e:.4e}")),
                summary.wall_seconds,
                summary.iterations
            );
            ExitCode::SUCCESS
        }
        Err(RunError::Diverged) => {
            eprintln!("error: training diverged; last checkpoint written");
            ExitCode::from(2)
        }
        Err(e @ (RunError::Config(_) | RunError::Oracle(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
