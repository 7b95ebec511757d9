//! Problem definitions, learned memory fields, reconstruction maps and the
//! composite training loss.
//!
//! One IDE instance is described by a [`ProblemSpec`]: the governing
//! operators and closed forms live in [`Experiment`], the map from the
//! learned memory field back to the solution in [`ReconstructionMap`], and
//! the loss recipe in [`LossWeights`] / [`DatasetSizes`].
//!
//! Everything numeric is generic over the base scalar, so the identical
//! residual and reconstruction code runs on `f64` (oracles, metrics) and on
//! recorded training programs.

mod loss;
mod reconstruct;

pub use loss::{
    data_loss, ide_residual_batch, memory_consistency_loss, total_loss, DataSet, LossBreakdown,
    MemoryDataset, ModelError,
};
pub use reconstruct::{
    ide_residual_at, reconstruct_3d, reconstruct_fractional, reconstruct_volterra, u_theta_at,
};

use statrs::function::gamma::gamma;

use crate::diffkit::JetOf;
use crate::encoders::FieldDef;
use crate::scalar::Scalar;

/// Base scalars that embed into their own jet hierarchy (`f64`, `Var`).
pub trait BaseScalar: Scalar + JetOf<Self> {}
impl<T: Scalar + JetOf<T>> BaseScalar for T {}

/// A differentiable scalar field over problem coordinates, evaluable at any
/// jet of the base scalar.
pub trait FieldLike<B: BaseScalar> {
    fn eval<J: JetOf<B>>(&self, xi: &[J]) -> J;
}

/// An encoder with its parameter slice.
pub struct EncoderField<'a, B: BaseScalar> {
    pub def: &'a FieldDef,
    pub params: &'a [B],
}

impl<B: BaseScalar> FieldLike<B> for EncoderField<'_, B> {
    fn eval<J: JetOf<B>>(&self, xi: &[J]) -> J {
        self.def.eval(self.params, xi)
    }
}

/// Closed-form fields: exact solutions, exact memory operators and smooth
/// probes used by the identity tests.
#[derive(Debug, Clone)]
pub enum AnalyticField {
    Zero,
    /// `e^{-t} cosh(sqrt(kappa) t)` — Volterra exact solution.
    VolterraU { kappa: f64 },
    /// `e^{-t} sinh(sqrt(kappa) t)/sqrt(kappa)` — Volterra exact memory.
    VolterraM { kappa: f64 },
    /// `t sin x1 cos x2` — 3D exact solution.
    U3d,
    /// `(t - 1 + e^{-t})(1 - cos x1) sin x2` — 3D exact memory.
    M3d,
    /// `(t - 1 + e^{-t}) sin x1 cos x2` — running time integral of the 3D
    /// solution (first auxiliary field of the cascade).
    Aux3dV1,
    /// `(t - 1 + e^{-t})(1 - cos x1) cos x2` — x1 integral of the first
    /// auxiliary field.
    Aux3dV2,
    /// `t^3 sin(pi x)` — fractional-diffusion exact solution.
    FracU,
    /// Analytic Caputo derivative of [`AnalyticField::FracU`]:
    /// `Γ(4)/Γ(4-α) t^{3-α} sin(pi x)`.
    FracCaputo { alpha: f64 },
}

impl<B: BaseScalar> FieldLike<B> for AnalyticField {
    fn eval<J: JetOf<B>>(&self, xi: &[J]) -> J {
        match self {
            AnalyticField::Zero => J::zero(),
            AnalyticField::VolterraU { kappa } => {
                let t = xi[0];
                let rk = kappa.sqrt();
                (-t).exp() * (t * J::from_f64(rk)).cosh()
            }
            AnalyticField::VolterraM { kappa } => {
                let t = xi[0];
                let rk = kappa.sqrt();
                (-t).exp() * (t * J::from_f64(rk)).sinh() * J::from_f64(1.0 / rk)
            }
            AnalyticField::U3d => {
                let (x1, x2, t) = (xi[0], xi[1], xi[2]);
                t * x1.sin() * x2.cos()
            }
            AnalyticField::M3d => {
                let (x1, x2, t) = (xi[0], xi[1], xi[2]);
                (t - J::one() + (-t).exp()) * (J::one() - x1.cos()) * x2.sin()
            }
            AnalyticField::Aux3dV1 => {
                let (x1, x2, t) = (xi[0], xi[1], xi[2]);
                (t - J::one() + (-t).exp()) * x1.sin() * x2.cos()
            }
            AnalyticField::Aux3dV2 => {
                let (x1, x2, t) = (xi[0], xi[1], xi[2]);
                (t - J::one() + (-t).exp()) * (J::one() - x1.cos()) * x2.cos()
            }
            AnalyticField::FracU => {
                let (x, t) = (xi[0], xi[1]);
                t.powi(3) * (x * J::from_f64(std::f64::consts::PI)).sin()
            }
            AnalyticField::FracCaputo { alpha } => {
                let (x, t) = (xi[0], xi[1]);
                let c = gamma(4.0) / gamma(4.0 - alpha);
                t.powf_const(3.0 - alpha)
                    * J::from_f64(c)
                    * (x * J::from_f64(std::f64::consts::PI)).sin()
            }
        }
    }
}

/// Closed-form map from the learned memory representation to the solution.
/// Coefficients are fixed analytic quantities; the map carries no trainable
/// parameters of its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionMap {
    /// `u = ∂_t M + M`.
    Volterra1d,
    /// `u = ∂³M/∂t∂x1∂x2 + ∂²M/∂x1∂x2`.
    Nested3d,
    /// `u = u_0 + J`.
    Fractional,
}

/// Governing equation of one experiment, with its operators, kernel and
/// closed-form solutions.
#[derive(Debug, Clone)]
pub enum Experiment {
    /// `u' + u = kappa ∫_0^t e^{tau - t} u(tau) dtau` on `[0, domain_len]`,
    /// `u(0) = 1`.
    Volterra { kappa: f64, domain_len: f64 },
    /// `(∂_t + ∂_x1 + ∂_x2) u = u + ∫∫∫ e^{tau - t} u + f` on `[0,1]^3`.
    Nonlocal3d,
    /// `D_t^alpha u = u_xx + S` on `(0,1) x (0,1)`, homogeneous data.
    FracDiffusion { alpha: f64 },
}

impl Experiment {
    /// Coordinate arity of the field inputs.
    pub fn dim(&self) -> usize {
        match self {
            Experiment::Volterra { .. } => 1,
            Experiment::Nonlocal3d => 3,
            Experiment::FracDiffusion { .. } => 2,
        }
    }

    pub fn domain(&self) -> Vec<(f64, f64)> {
        match self {
            Experiment::Volterra { domain_len, .. } => vec![(0.0, *domain_len)],
            Experiment::Nonlocal3d => vec![(0.0, 1.0); 3],
            Experiment::FracDiffusion { .. } => vec![(0.0, 1.0); 2],
        }
    }

    pub fn reconstruction(&self) -> ReconstructionMap {
        match self {
            Experiment::Volterra { .. } => ReconstructionMap::Volterra1d,
            Experiment::Nonlocal3d => ReconstructionMap::Nested3d,
            Experiment::FracDiffusion { .. } => ReconstructionMap::Fractional,
        }
    }

    /// Causal exponential kernel weight `e^{tau - t}` shared by the two
    /// classical experiments.
    pub fn kernel(tau: f64, t: f64) -> f64 {
        (tau - t).exp()
    }

    /// Source term of the governing equation.
    pub fn source<S: Scalar>(&self, xi: &[S]) -> S {
        match self {
            Experiment::Volterra { .. } => S::zero(),
            Experiment::Nonlocal3d => {
                let (x1, x2, t) = (xi[0], xi[1], xi[2]);
                let (sin1, cos1) = (x1.sin(), x1.cos());
                let (sin2, cos2) = (x2.sin(), x2.cos());
                let mem = (t - S::one() + (-t).exp()) * (S::one() - cos1) * sin2;
                sin1 * cos2 + t * cos1 * cos2 - t * sin1 * sin2 - t * sin1 * cos2 - mem
            }
            Experiment::FracDiffusion { alpha } => {
                let (x, t) = (xi[0], xi[1]);
                let c = gamma(4.0) / gamma(4.0 - alpha);
                let pi = std::f64::consts::PI;
                let frac = t.powf_const(3.0 - alpha) * S::from_f64(c);
                let lap = t.powi(3) * S::from_f64(pi * pi);
                (frac + lap) * (x * S::from_f64(pi)).sin()
            }
        }
    }

    pub fn exact_u(&self) -> AnalyticField {
        match self {
            Experiment::Volterra { kappa, .. } => AnalyticField::VolterraU { kappa: *kappa },
            Experiment::Nonlocal3d => AnalyticField::U3d,
            Experiment::FracDiffusion { .. } => AnalyticField::FracU,
        }
    }

    /// Exact memory field: the kernel integral for the classical cases, the
    /// analytic Caputo derivative for the fractional case.
    pub fn exact_m(&self) -> AnalyticField {
        match self {
            Experiment::Volterra { kappa, .. } => AnalyticField::VolterraM { kappa: *kappa },
            Experiment::Nonlocal3d => AnalyticField::M3d,
            Experiment::FracDiffusion { alpha } => AnalyticField::FracCaputo { alpha: *alpha },
        }
    }

    /// Known memory-strength coefficient multiplying the learned memory field
    /// in the residual (only the Volterra problem has one).
    pub fn kappa(&self) -> f64 {
        match self {
            Experiment::Volterra { kappa, .. } => *kappa,
            _ => 1.0,
        }
    }
}

/// Learned fields of the method: the memory field and, for fractional
/// problems, the inverse-memory field.
#[derive(Debug, Clone)]
pub struct MemoryFields {
    pub memory: FieldDef,
    pub inverse: Option<FieldDef>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub ide: f64,
    pub data: f64,
    pub mem: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { ide: 1.0, data: 1.0, mem: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetSizes {
    /// Interior collocation points for the IDE residual.
    pub n_res: usize,
    /// Boundary/initial samples per constrained face.
    pub n_data: usize,
    /// Outer points of the nonlocal consistency set.
    pub n_mem: usize,
    /// Gauss–Legendre points per integral dimension.
    pub n_i: usize,
    /// Temporal grid steps of the L1 discretization.
    pub n_t: usize,
    /// Interior measurement samples (inverse problems).
    pub n_meas: usize,
}

/// One IDE instance: governing operators, reconstruction map, loss recipe and
/// dataset sizes, plus the optional trainable memory-strength coefficient.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub experiment: Experiment,
    pub reconstruction: ReconstructionMap,
    pub weights: LossWeights,
    pub sizes: DatasetSizes,
    /// `Some(init)` when the memory strength is unknown and trained.
    pub trainable_kappa: Option<f64>,
}

impl ProblemSpec {
    pub fn new(
        experiment: Experiment,
        weights: LossWeights,
        sizes: DatasetSizes,
        trainable_kappa: Option<f64>,
    ) -> Result<Self, ModelError> {
        if !(weights.ide > 0.0 && weights.data > 0.0 && weights.mem > 0.0) {
            return Err(ModelError::BadWeights);
        }
        let reconstruction = experiment.reconstruction();
        Ok(ProblemSpec { experiment, reconstruction, weights, sizes, trainable_kappa })
    }
}
