//! Reference neural solvers and the shared error metric.
//!
//! Auxiliary-field solvers reformulate the IDE as a coupled differential
//! system: the network emits the solution together with auxiliary outputs
//! representing the nonlocal integrals, whose defining relations are enforced
//! by automatic differentiation instead of quadrature. For the causal
//! exponential kernel `e^{tau - t}`, Leibniz' rule gives the evolution
//! `∂v/∂t = K(t,t) u - v = u - v`, so the diagonal kernel factor is 1 and the
//! decay enters through the `-v` term. The 3D problem chains three cumulative
//! integrals (time, then x1, then x2).
//!
//! Discretized-residual solvers for fractional problems keep a single output
//! and insert the L1 approximation of the Caputo derivative directly into the
//! physics residual at temporal grid points; every sample of the history
//! participates in the parameter gradient.

use thiserror::Error;

use crate::diffkit::{JetOf, Taylor};
use crate::fractional::caputo_l1_weights;
use crate::model::{BaseScalar, Experiment, FieldLike};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("relative error is undefined against a zero-norm reference")]
    ZeroNormReference,
    #[error("sample grids differ in length: {got} vs {expected}")]
    GridMismatch { expected: usize, got: usize },
}

/// Multi-output field (the auxiliary solvers emit all unknowns jointly).
pub trait MultiField<B: BaseScalar> {
    fn eval_multi<J: JetOf<B>>(&self, xi: &[J]) -> Vec<J>;
}

impl<B: BaseScalar> MultiField<B> for crate::model::EncoderField<'_, B> {
    fn eval_multi<J: JetOf<B>>(&self, xi: &[J]) -> Vec<J> {
        self.def.eval_multi(self.params, xi)
    }
}

impl<B: BaseScalar> MultiField<B> for [crate::model::AnalyticField] {
    fn eval_multi<J: JetOf<B>>(&self, xi: &[J]) -> Vec<J> {
        self.iter().map(|f| FieldLike::<B>::eval(f, xi)).collect()
    }
}

/// Auxiliary-field reformulation of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxSystem {
    /// Outputs `(u, v)`; `v` is the running kernel integral, `v(0) = 0`.
    Volterra,
    /// Outputs `(u, v1, v2, v3)`: time, x1 and x2 cumulative integrals, with
    /// `v1(.,0) = 0`, `v2(x1=0,.) = 0`, `v3(x2=0,.) = 0`.
    Nonlocal3d,
}

impl AuxSystem {
    pub fn n_outputs(&self) -> usize {
        match self {
            AuxSystem::Volterra => 2,
            AuxSystem::Nonlocal3d => 4,
        }
    }

    /// Number of residual components returned by [`aux_residual`].
    pub fn n_residuals(&self) -> usize {
        match self {
            AuxSystem::Volterra => 2,
            AuxSystem::Nonlocal3d => 4,
        }
    }
}

type D1<B> = Taylor<B, 2>;
type D2<B> = Taylor<D1<B>, 2>;
type D3<B> = Taylor<D2<B>, 2>;

/// Residual components of the auxiliary system at one point.
///
/// * Volterra: `[u' + u - kappa v, v' - u + v]`.
/// * 3D: `[(u_t + u_x1 + u_x2) - u - v3 - f, v1_t - u + v1, v2_x1 - v1,
///   v3_x2 - v2]`.
pub fn aux_residual<B: BaseScalar>(
    sys: AuxSystem,
    net: &(impl MultiField<B> + ?Sized),
    kappa: B,
    xi: &[B],
) -> Vec<B> {
    match sys {
        AuxSystem::Volterra => {
            let outs = net.eval_multi(&[Taylor::<B, 2>::var(xi[0])]);
            let (u, du) = (outs[0].coeff(0), outs[0].coeff(1));
            let (v, dv) = (outs[1].coeff(0), outs[1].coeff(1));
            vec![du + u - kappa * v, dv - u + v]
        }
        AuxSystem::Nonlocal3d => {
            let x1 = D3::<B>::var(D2::constant(D1::constant(xi[0])));
            let x2 = D3::constant(D2::<B>::var(D1::constant(xi[1])));
            let t = D3::constant(D2::constant(D1::<B>::var(xi[2])));
            let outs = net.eval_multi(&[x1, x2, t]);
            let val = |o: &D3<B>| o.coeff(0).coeff(0).coeff(0);
            let dx1 = |o: &D3<B>| o.coeff(1).coeff(0).coeff(0);
            let dx2 = |o: &D3<B>| o.coeff(0).coeff(1).coeff(0);
            let dt = |o: &D3<B>| o.coeff(0).coeff(0).coeff(1);
            let (u, v1, v2, v3) = (&outs[0], &outs[1], &outs[2], &outs[3]);
            let f = Experiment::Nonlocal3d.source(xi);
            vec![
                dt(u) + dx1(u) + dx2(u) - val(u) - val(v3) - f,
                dt(v1) - val(u) + val(v1),
                dx1(v2) - val(v1),
                dx2(v3) - val(v2),
            ]
        }
    }
}

/// Discretized-residual configuration for the fractional baseline: residuals
/// live on the temporal grid `t_n = n/N_t`, `n >= 1`.
#[derive(Debug, Clone, Copy)]
pub struct FpdeResidualCfg {
    pub alpha: f64,
    pub n_t: usize,
}

/// Physics residual of the fractional diffusion problem at `(x, t_n)`:
/// the L1 Caputo sum of the network history minus `u_xx + S`.
pub fn fpde_residual<B: BaseScalar>(
    cfg: &FpdeResidualCfg,
    u: &impl FieldLike<B>,
    x: B,
    n: usize,
) -> B {
    assert!(n >= 1, "fractional residuals start at the first grid time");
    let dt = 1.0 / cfg.n_t as f64;
    let w = caputo_l1_weights(cfg.alpha, dt, n).expect("valid L1 configuration");
    let mut caputo = B::zero();
    for (k, &wk) in w.iter().enumerate() {
        let uk = u.eval(&[x, B::from_f64(k as f64 * dt)]);
        caputo = uk.mul_add(B::from_f64(wk), caputo);
    }
    let t_n = B::from_f64(n as f64 * dt);
    let uj = u.eval(&[Taylor::<B, 3>::var(x), Taylor::constant(t_n)]);
    let u_xx = uj.coeff(2) * B::from_f64(2.0);
    let s = Experiment::FracDiffusion { alpha: cfg.alpha }.source(&[x, t_n]);
    caputo - u_xx - s
}

/// `‖approx - exact‖_2 / ‖exact‖_2` over identical sample grids.
pub fn relative_error(approx: &[f64], exact: &[f64]) -> Result<f64, BaselineError> {
    if approx.len() != exact.len() {
        return Err(BaselineError::GridMismatch { expected: exact.len(), got: approx.len() });
    }
    let norm: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(BaselineError::ZeroNormReference);
    }
    let diff: f64 = approx
        .iter()
        .zip(exact)
        .map(|(a, e)| (a - e) * (a - e))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// Scalar variant: `|approx - exact| / |exact|`.
pub fn relative_error_scalar(approx: f64, exact: f64) -> Result<f64, BaselineError> {
    if exact == 0.0 {
        return Err(BaselineError::ZeroNormReference);
    }
    Ok((approx - exact).abs() / exact.abs())
}
