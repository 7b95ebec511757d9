//! Explicit reconstruction of the solution field from the learned memory
//! representation, and the continuous IDE residual built on top of it.
//!
//! The reconstruction maps are closed algebraic identities obtained by
//! differentiating the memory integral through its variable limits:
//!
//! * Volterra kernel `e^{tau-t}`: `dM/dt = u - M`, so `u = M' + M`.
//! * Nested 3D kernel: `u = ∂³M/∂t∂x1∂x2 + ∂²M/∂x1∂x2`.
//! * Fractional: the inverse field already is the fractional integral of the
//!   memory field, so `u = u_0 + J`.
//!
//! Every derivative is taken with nested forward jets, which keeps the
//! residual fully continuous — no quadrature node ever enters these
//! functions. The transport part of the 3D residual is evaluated through an
//! extra first-order direction variable shifting all three coordinates at
//! once, so one jet evaluation yields both the reconstruction and its
//! directional derivative.

use super::{BaseScalar, Experiment, FieldLike, ReconstructionMap};
use crate::diffkit::Taylor;
use crate::scalar::Scalar;

type D1<B> = Taylor<B, 2>;
type D2<B> = Taylor<D1<B>, 2>;
type D3<B> = Taylor<D2<B>, 2>;

/// `u = ∂_t M + M` at time `t`.
pub fn reconstruct_volterra<B: BaseScalar>(m: &impl FieldLike<B>, t: B) -> B {
    let mj = m.eval(&[Taylor::<B, 2>::var(t)]);
    mj.coeff(1) + mj.coeff(0)
}

/// `u = ∂³M/∂t∂x1∂x2 + ∂²M/∂x1∂x2` at `xi = (x1, x2, t)`.
pub fn reconstruct_3d<B: BaseScalar>(m: &impl FieldLike<B>, xi: &[B]) -> B {
    let x1 = D3::<B>::var(D2::constant(D1::constant(xi[0])));
    let x2 = D3::constant(D2::<B>::var(D1::constant(xi[1])));
    let t = D3::constant(D2::constant(D1::<B>::var(xi[2])));
    let mj = m.eval(&[x1, x2, t]);
    mj.coeff(1).coeff(1).coeff(1) + mj.coeff(1).coeff(1).coeff(0)
}

/// `u = u_0 + J` at `xi`.
pub fn reconstruct_fractional<B: BaseScalar>(j: &impl FieldLike<B>, u0: B, xi: &[B]) -> B {
    u0 + j.eval(xi)
}

/// Reconstructed solution at a point, dispatched on the problem's map.
/// The fractional experiments here have a homogeneous initial condition.
pub fn u_theta_at<B: BaseScalar>(
    map: ReconstructionMap,
    m: &impl FieldLike<B>,
    j: Option<&impl FieldLike<B>>,
    xi: &[B],
) -> B {
    match map {
        ReconstructionMap::Volterra1d => reconstruct_volterra(m, xi[0]),
        ReconstructionMap::Nested3d => reconstruct_3d(m, xi),
        ReconstructionMap::Fractional => {
            reconstruct_fractional(j.expect("fractional problems carry an inverse field"), B::zero(), xi)
        }
    }
}

/// Pointwise IDE residual with every derivative taken by forward jets.
///
/// * Volterra: `∂_t u + u - kappa M` (order-2 jet in `t`).
/// * Nested 3D: `(∂_t + ∂_x1 + ∂_x2) u - u - M - f` through a fourth
///   direction variable.
/// * Fractional diffusion: `M - ∂_xx u - S`, the learned memory field
///   standing in for the fractional time derivative.
pub fn ide_residual_at<B: BaseScalar>(
    ex: &Experiment,
    m: &impl FieldLike<B>,
    j: Option<&impl FieldLike<B>>,
    kappa: B,
    xi: &[B],
) -> B {
    match ex {
        Experiment::Volterra { .. } => {
            let mj = m.eval(&[Taylor::<B, 3>::var(xi[0])]);
            let m0 = mj.coeff(0);
            let m1 = mj.coeff(1);
            let m2 = mj.coeff(2) * B::from_f64(2.0);
            // u = m1 + m0, u' = m2 + m1.
            (m2 + m1) + (m1 + m0) - kappa * m0
        }
        Experiment::Nonlocal3d => {
            let x1 = Taylor([D3::<B>::var(D2::constant(D1::constant(xi[0]))), D3::one()]);
            let x2 = Taylor([D3::constant(D2::<B>::var(D1::constant(xi[1]))), D3::one()]);
            let t = Taylor([D3::constant(D2::constant(D1::<B>::var(xi[2]))), D3::one()]);
            let mj = m.eval(&[x1, x2, t]);
            let c = |s: usize, a: usize, b: usize, d: usize| mj.coeff(s).coeff(a).coeff(b).coeff(d);
            let transported = c(1, 1, 1, 1) + c(1, 1, 1, 0);
            let u = c(0, 1, 1, 1) + c(0, 1, 1, 0);
            let m_val = c(0, 0, 0, 0);
            transported - u - m_val - ex.source(xi)
        }
        Experiment::FracDiffusion { .. } => {
            let m_val = m.eval(xi);
            let jf = j.expect("fractional problems carry an inverse field");
            let jx = jf.eval(&[Taylor::<B, 3>::var(xi[0]), Taylor::constant(xi[1])]);
            let u_xx = jx.coeff(2) * B::from_f64(2.0);
            m_val - u_xx - ex.source(xi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AnalyticField;

    const NONE: Option<&AnalyticField> = None;

    #[test]
    fn volterra_reconstruction_zero_field() {
        let m = AnalyticField::Zero;
        assert_eq!(reconstruct_volterra::<f64>(&m, 0.7), 0.0);
    }

    #[test]
    fn volterra_reconstruction_recovers_exact_solution() {
        for kappa in [0.3, 0.5, 0.8, 1.0] {
            let m = AnalyticField::VolterraM { kappa };
            let u = AnalyticField::VolterraU { kappa };
            let mut worst = 0.0_f64;
            for i in 0..100 {
                let t = i as f64 / 99.0;
                let got = reconstruct_volterra::<f64>(&m, t);
                let want: f64 = FieldLike::<f64>::eval(&u, &[t]);
                worst = worst.max((got - want).abs());
            }
            assert!(worst <= 1e-10, "kappa {kappa}: max err {worst}");
        }
    }

    #[test]
    fn volterra_reconstruction_of_saturating_memory_is_constant_one() {
        // M(t) = 1 - e^{-t}: dM/dt + M = e^{-t} + 1 - e^{-t} = 1.
        struct Saturating;
        impl<B: BaseScalar> FieldLike<B> for Saturating {
            fn eval<J: crate::diffkit::JetOf<B>>(&self, xi: &[J]) -> J {
                J::one() - (-xi[0]).exp()
            }
        }
        for t in [0.0, 0.3, 1.7] {
            let got = reconstruct_volterra::<f64>(&Saturating, t);
            assert!((got - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn reconstruction_3d_zero_field() {
        assert_eq!(reconstruct_3d::<f64>(&AnalyticField::Zero, &[0.5, 0.5, 0.5]), 0.0);
    }

    #[test]
    fn reconstruction_3d_recovers_exact_solution() {
        let m = AnalyticField::M3d;
        let u = AnalyticField::U3d;
        let mut worst = 0.0_f64;
        for i in 0..5 {
            for jj in 0..5 {
                for k in 0..5 {
                    let xi = [i as f64 / 4.0, jj as f64 / 4.0, k as f64 / 4.0];
                    let got = reconstruct_3d::<f64>(&m, &xi);
                    let want: f64 = FieldLike::<f64>::eval(&u, &xi);
                    worst = worst.max((got - want).abs());
                }
            }
        }
        assert!(worst <= 1e-9, "max err {worst}");
    }

    #[test]
    fn reconstruction_3d_polynomial_probe() {
        // M = x1 x2 t: third mixed derivative 1, second mixed derivative t,
        // so the reconstruction is 1 + t.
        struct Probe;
        impl<B: BaseScalar> FieldLike<B> for Probe {
            fn eval<J: crate::diffkit::JetOf<B>>(&self, xi: &[J]) -> J {
                xi[0] * xi[1] * xi[2]
            }
        }
        for t in [0.0, 0.25, 1.0] {
            let got = reconstruct_3d::<f64>(&Probe, &[0.3, 0.8, t]);
            assert!((got - (1.0 + t)).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_identities_hold_for_smooth_probes() {
        // Polynomial probe M = x1^2 x2 t^3 + x1 x2 t and an exponential probe
        // M = e^{x1} sin(x2) t^2, against hand-derived reconstructions.
        struct Poly;
        impl<B: BaseScalar> FieldLike<B> for Poly {
            fn eval<J: crate::diffkit::JetOf<B>>(&self, xi: &[J]) -> J {
                xi[0].powi(2) * xi[1] * xi[2].powi(3) + xi[0] * xi[1] * xi[2]
            }
        }
        struct Expo;
        impl<B: BaseScalar> FieldLike<B> for Expo {
            fn eval<J: crate::diffkit::JetOf<B>>(&self, xi: &[J]) -> J {
                xi[0].exp() * xi[1].sin() * xi[2].powi(2)
            }
        }
        let pts = [[0.2, 0.7, 0.5], [0.9, 0.1, 0.8], [0.5, 0.5, 0.25]];
        for xi in pts {
            let (x1, x2, t) = (xi[0], xi[1], xi[2]);
            let got = reconstruct_3d::<f64>(&Poly, &xi);
            // d3/dt dx1 dx2 = 6 x1 t^2 + 1; d2/dx1 dx2 = 2 x1 t^3 + t.
            let want = 6.0 * x1 * t * t + 1.0 + 2.0 * x1 * t.powi(3) + t;
            assert!((got - want).abs() < 1e-9, "poly probe at {xi:?}");
            let got = reconstruct_3d::<f64>(&Expo, &xi);
            let want = x1.exp() * x2.cos() * (2.0 * t + t * t);
            assert!((got - want).abs() < 1e-9, "expo probe at {xi:?}");
        }
    }

    #[test]
    fn fractional_reconstruction_is_shift_by_initial_condition() {
        let j = AnalyticField::Zero;
        assert_eq!(reconstruct_fractional::<f64>(&j, 0.25, &[0.5, 0.5]), 0.25);
        // With the homogeneous initial condition the solution equals the
        // inverse field exactly.
        let j = AnalyticField::FracU;
        let xi = [0.3, 0.6];
        let got = u_theta_at(ReconstructionMap::Fractional, &AnalyticField::Zero, Some(&j), &xi);
        let want: f64 = FieldLike::<f64>::eval(&j, &xi);
        assert_eq!(got, want);
    }

    #[test]
    fn residual_vanishes_on_exact_volterra_fields() {
        for kappa in [0.3, 0.5, 0.8, 1.0] {
            let ex = Experiment::Volterra { kappa, domain_len: 1.0 };
            let m = AnalyticField::VolterraM { kappa };
            let mut worst = 0.0_f64;
            for i in 1..100 {
                let t = i as f64 / 99.0;
                let r = ide_residual_at(&ex, &m, NONE, kappa, &[t]);
                worst = worst.max(r.abs());
            }
            assert!(worst <= 1e-10, "kappa {kappa}: residual {worst}");
        }
    }

    #[test]
    fn residual_vanishes_on_exact_3d_fields() {
        let ex = Experiment::Nonlocal3d;
        let m = AnalyticField::M3d;
        let mut worst = 0.0_f64;
        for i in 0..6 {
            for jj in 0..6 {
                for k in 0..6 {
                    let xi = [i as f64 / 5.0, jj as f64 / 5.0, k as f64 / 5.0];
                    let r = ide_residual_at(&ex, &m, NONE, 1.0, &xi);
                    worst = worst.max(r.abs());
                }
            }
        }
        assert!(worst <= 1e-9, "residual {worst}");
    }

    #[test]
    fn residual_vanishes_on_exact_fractional_fields() {
        let alpha = 0.5;
        let ex = Experiment::FracDiffusion { alpha };
        let m = AnalyticField::FracCaputo { alpha };
        let j = AnalyticField::FracU;
        let mut worst = 0.0_f64;
        for i in 1..20 {
            for n in 1..20 {
                let xi = [i as f64 / 20.0, n as f64 / 20.0];
                let r = ide_residual_at(&ex, &m, Some(&j), 1.0, &xi);
                worst = worst.max(r.abs());
            }
        }
        assert!(worst <= 1e-9, "residual {worst}");
    }

    #[test]
    fn fractional_residual_consistent_with_l1_oracle() {
        // The learned-field residual with the analytic Caputo field matches
        // the L1 discretization of the exact solution to the scheme's
        // truncation error.
        let alpha = 0.5;
        let n_t = 320;
        let dt = 1.0 / n_t as f64;
        let x = 0.37;
        let u_samples: Vec<f64> = (0..=n_t)
            .map(|k| {
                let t = k as f64 * dt;
                t.powi(3) * (std::f64::consts::PI * x).sin()
            })
            .collect();
        let l1 = crate::fractional::caputo_l1(&u_samples, alpha, dt, n_t).unwrap();
        let m = AnalyticField::FracCaputo { alpha };
        let analytic: f64 = FieldLike::<f64>::eval(&m, &[x, 1.0]);
        assert!((l1 - analytic).abs() <= 5e-3, "l1 {l1} vs analytic {analytic}");
    }
}
