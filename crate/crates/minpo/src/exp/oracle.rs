//! Closed-form reference solutions and the startup self-check.
//!
//! Each experiment ships the exact solution and exact memory field used for
//! error metrics. Before any training starts, the governing equation is
//! verified against those closed forms at random interior points; a failure
//! here means the derived source term and the exact fields disagree, which
//! would poison every downstream metric.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ide_residual_at, AnalyticField, Experiment};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("exact solution violates the governing equation: max residual {0:e}")]
    SelfCheckFailed(f64),
}

/// Exact solution, exact memory operator and the governing equation of one
/// experiment.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    pub experiment: Experiment,
    pub u: AnalyticField,
    pub m: AnalyticField,
}

impl ExactOracle {
    pub fn new(experiment: &Experiment) -> Self {
        ExactOracle {
            u: experiment.exact_u(),
            m: experiment.exact_m(),
            experiment: experiment.clone(),
        }
    }

    /// Max absolute residual of the closed forms over `n` random interior
    /// points; must stay below 1e-9.
    pub fn self_check(&self, n: usize, seed: u64) -> Result<f64, OracleError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let domain = self.experiment.domain();
        let kappa = self.experiment.kappa();
        let mut worst = 0.0_f64;
        for _ in 0..n {
            let xi: Vec<f64> = domain
                .iter()
                .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect();
            let j = match self.experiment {
                Experiment::FracDiffusion { .. } => Some(&self.u),
                _ => None,
            };
            let r = ide_residual_at(&self.experiment, &self.m, j, kappa, &xi);
            worst = worst.max(r.abs());
        }
        if worst <= 1e-9 {
            Ok(worst)
        } else {
            Err(OracleError::SelfCheckFailed(worst))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_three_experiments_pass_the_self_check() {
        for ex in [
            Experiment::Volterra { kappa: 0.8, domain_len: 1.0 },
            Experiment::Nonlocal3d,
            Experiment::FracDiffusion { alpha: 0.5 },
            Experiment::FracDiffusion { alpha: 0.8 },
        ] {
            let oracle = ExactOracle::new(&ex);
            let worst = oracle.self_check(1000, 11).unwrap();
            assert!(worst <= 1e-9, "{ex:?}: {worst}");
        }
    }
}
