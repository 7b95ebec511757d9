//! Discrete fractional calculus: the L1 scheme for the Caputo derivative,
//! a product-integration rule for the Riemann–Liouville integral, and the
//! inverse-identity diagnostic connecting the two.
//!
//! The L1 scheme approximates the Caputo derivative of order `alpha` in (0,1)
//! on a uniform grid `t_k = k Δt` as
//!
//! ```text
//! D^α u(t_n) ≈ Δt^{-α}/Γ(2-α) · Σ_{k=0}^{n-1} c_k (u(t_{n-k}) - u(t_{n-k-1})),
//! c_ℓ = (ℓ+1)^{1-α} - ℓ^{1-α},
//! ```
//!
//! with accuracy order `2 - α`. Expanding the telescoping sum gives the
//! weight of each sample `u(t_j)`, which is the form consumed by the
//! consistency loss and the discretized-residual baseline where each sample
//! is a graph node.

use statrs::function::gamma::gamma;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FractionalError {
    #[error("fractional order {0} outside (0, 1)")]
    BadOrder(f64),
    #[error("the L1 derivative is undefined at the initial instant (n = 0)")]
    AtInitialInstant,
    #[error("need samples up to index {n}, got {got}")]
    TooFewSamples { n: usize, got: usize },
}

fn check_order(alpha: f64) -> Result<(), FractionalError> {
    if alpha <= 0.0 || alpha >= 1.0 || !alpha.is_finite() {
        return Err(FractionalError::BadOrder(alpha));
    }
    Ok(())
}

/// L1 memory coefficients `c_0..c_{n-1}`.
pub fn l1_coefficients(alpha: f64, n: usize) -> Result<Vec<f64>, FractionalError> {
    check_order(alpha)?;
    let e = 1.0 - alpha;
    Ok((0..n)
        .map(|l| ((l + 1) as f64).powf(e) - (l as f64).powf(e))
        .collect())
}

/// Per-sample weights `w_0..w_n` such that the L1 approximation of the
/// Caputo derivative at `t_n` is `Σ_j w_j u(t_j)`.
pub fn caputo_l1_weights(alpha: f64, dt: f64, n: usize) -> Result<Vec<f64>, FractionalError> {
    check_order(alpha)?;
    if n == 0 {
        return Err(FractionalError::AtInitialInstant);
    }
    let c = l1_coefficients(alpha, n)?;
    let scale = dt.powf(-alpha) / gamma(2.0 - alpha);
    let mut w = vec![0.0; n + 1];
    w[n] = c[0];
    for j in 1..n {
        w[j] = c[n - j] - c[n - j - 1];
    }
    w[0] = -c[n - 1];
    for wj in &mut w {
        *wj *= scale;
    }
    Ok(w)
}

/// L1 approximation of the Caputo derivative at step `n` from samples
/// `u[0..=n]` on a uniform grid of spacing `dt`.
///
/// Evaluated in difference form `Σ c_k (u_{n-k} - u_{n-k-1})` so that
/// constant samples give exactly zero. [`caputo_l1_weights`] is the expanded
/// per-sample form; the two agree to rounding.
pub fn caputo_l1(u: &[f64], alpha: f64, dt: f64, n: usize) -> Result<f64, FractionalError> {
    if u.len() <= n {
        return Err(FractionalError::TooFewSamples { n, got: u.len() });
    }
    check_order(alpha)?;
    if n == 0 {
        return Err(FractionalError::AtInitialInstant);
    }
    let c = l1_coefficients(alpha, n)?;
    let scale = dt.powf(-alpha) / gamma(2.0 - alpha);
    let sum: f64 = (0..n).map(|k| c[k] * (u[n - k] - u[n - k - 1])).sum();
    Ok(scale * sum)
}

/// Per-sample weights `w_0..w_n` for the discrete Riemann–Liouville integral
/// `I^α f(t_n) ≈ Σ_j w_j f(t_j)`.
///
/// Product integration: `f` is taken piecewise linear between samples and the
/// moments of the singular kernel `(t - τ)^{α-1}` are integrated exactly on
/// each subinterval, so the integrable endpoint singularity costs no accuracy.
pub fn rl_integral_weights(alpha: f64, dt: f64, n: usize) -> Result<Vec<f64>, FractionalError> {
    check_order(alpha)?;
    let mut w = vec![0.0; n + 1];
    if n == 0 {
        return Ok(w);
    }
    let inv_gamma = 1.0 / gamma(alpha);
    for j in 0..n {
        // On [t_j, t_{j+1}] substitute s = t_n - τ, s in [a, b].
        let a = (n - j - 1) as f64 * dt;
        let b = (n - j) as f64 * dt;
        let m0 = (b.powf(alpha) - a.powf(alpha)) / alpha;
        let m1 = (b.powf(alpha + 1.0) - a.powf(alpha + 1.0)) / (alpha + 1.0);
        // With τ - t_j = b - s: f(τ) = f_j + (f_{j+1} - f_j)(b - s)/Δt.
        let lin = (b * m0 - m1) / dt;
        w[j] += inv_gamma * (m0 - lin);
        w[j + 1] += inv_gamma * lin;
    }
    Ok(w)
}

/// Discrete Riemann–Liouville integral of order `alpha` at step `n` from
/// samples `f[0..=n]`.
pub fn rl_integral_discrete(f: &[f64], alpha: f64, dt: f64, n: usize) -> Result<f64, FractionalError> {
    if f.len() <= n {
        return Err(FractionalError::TooFewSamples { n, got: f.len() });
    }
    let w = rl_integral_weights(alpha, dt, n)?;
    Ok(w.iter().zip(f).map(|(wi, fi)| wi * fi).sum())
}

/// Max-over-grid residual of the inverse identity
/// `I^α(D^α h) - (h - h(0))` evaluated with the two discrete operators on a
/// uniform grid of `n_t` steps over [0, 1].
///
/// The Caputo derivative of an absolutely continuous function vanishes at
/// `t = 0`, which supplies the sample the L1 scheme cannot produce.
pub fn lemma1_check(h: impl Fn(f64) -> f64, alpha: f64, n_t: usize) -> Result<f64, FractionalError> {
    check_order(alpha)?;
    let dt = 1.0 / n_t as f64;
    let hs: Vec<f64> = (0..=n_t).map(|k| h(k as f64 * dt)).collect();
    let mut d = vec![0.0; n_t + 1];
    for n in 1..=n_t {
        d[n] = caputo_l1(&hs, alpha, dt, n)?;
    }
    let mut worst = 0.0_f64;
    for n in 1..=n_t {
        let lhs = rl_integral_discrete(&d, alpha, dt, n)?;
        let rhs = hs[n] - hs[0];
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_examples() {
        for alpha in [0.1, 0.3, 0.5, 0.9] {
            let c = l1_coefficients(alpha, 5).unwrap();
            assert_eq!(c[0], 1.0);
        }
        let c = l1_coefficients(0.5, 3).unwrap();
        assert!((c[1] - (2.0_f64.sqrt() - 1.0)).abs() < 1e-12);
        let c = l1_coefficients(0.999, 2).unwrap();
        assert!(c[1] <= 7e-4, "c1 = {}", c[1]);
    }

    #[test]
    fn coefficients_positive_and_decreasing() {
        for alpha in [0.2, 0.5, 0.8] {
            let c = l1_coefficients(alpha, 50).unwrap();
            for l in 0..c.len() {
                assert!(c[l] > 0.0);
                if l > 0 {
                    assert!(c[l] < c[l - 1]);
                }
            }
        }
    }

    #[test]
    fn coefficient_telescoping_identity() {
        for alpha in [0.25, 0.5, 0.75] {
            let c = l1_coefficients(alpha, 33).unwrap();
            for n in 1..32 {
                let sum: f64 = (0..n).map(|l| c[l] - c[l + 1]).sum();
                assert!((sum - (1.0 - c[n])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn order_validation() {
        assert_eq!(l1_coefficients(0.0, 3).unwrap_err(), FractionalError::BadOrder(0.0));
        assert_eq!(l1_coefficients(1.0, 3).unwrap_err(), FractionalError::BadOrder(1.0));
        assert_eq!(
            caputo_l1(&[1.0], 0.5, 0.1, 0).unwrap_err(),
            FractionalError::AtInitialInstant
        );
    }

    #[test]
    fn caputo_of_constant_vanishes() {
        let u = vec![3.7; 65];
        for n in [1, 4, 64] {
            let d = caputo_l1(&u, 0.4, 1.0 / 64.0, n).unwrap();
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn caputo_single_step_form() {
        // n = 1 reduces to (u1 - u0) Δt^{-α} / Γ(2 - α).
        let (alpha, dt) = (0.5, 0.03);
        let u = [0.4, 0.9];
        let got = caputo_l1(&u, alpha, dt, 1).unwrap();
        let want = (u[1] - u[0]) * dt.powf(-alpha) / gamma(2.0 - alpha);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn caputo_linear_function() {
        // D^{0.5} t = t^{0.5} / Γ(1.5); at t = 1 this is 2/sqrt(pi).
        let n_t = 320;
        let dt = 1.0 / n_t as f64;
        let u: Vec<f64> = (0..=n_t).map(|k| k as f64 * dt).collect();
        let got = caputo_l1(&u, 0.5, dt, n_t).unwrap();
        let want = 2.0 / std::f64::consts::PI.sqrt();
        assert!((got - want).abs() <= 5e-3, "got {got}, want {want}");
    }

    #[test]
    fn caputo_is_linear_in_samples() {
        let mut state = 99u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let n = 17;
        let dt = 0.05;
        let u: Vec<f64> = (0..=n).map(|_| rng()).collect();
        let v: Vec<f64> = (0..=n).map(|_| rng()).collect();
        let combo: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.5 * a - 1.3 * b).collect();
        let lhs = caputo_l1(&combo, 0.6, dt, n).unwrap();
        let rhs = 2.5 * caputo_l1(&u, 0.6, dt, n).unwrap() - 1.3 * caputo_l1(&v, 0.6, dt, n).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    fn caputo_t3_error(alpha: f64, n_t: usize) -> f64 {
        let dt = 1.0 / n_t as f64;
        let u: Vec<f64> = (0..=n_t).map(|k| (k as f64 * dt).powi(3)).collect();
        let got = caputo_l1(&u, alpha, dt, n_t).unwrap();
        // Analytic Caputo of t^3: Γ(4)/Γ(4-α) t^{3-α}, evaluated at t = 1.
        let want = gamma(4.0) / gamma(4.0 - alpha);
        (got - want).abs()
    }

    #[test]
    fn caputo_cubic_value_and_rate() {
        // At α = 0.5 the analytic value is 6 / Γ(3.5).
        let want = 6.0 / gamma(3.5);
        assert!((gamma(4.0) / gamma(3.5) - want).abs() < 1e-12);
        let errs: Vec<f64> = [40, 80, 160, 320]
            .iter()
            .map(|&n| caputo_t3_error(0.5, n))
            .collect();
        // log-log slope across the refinement ladder.
        let slope = (errs[0] / errs[3]).ln() / (8.0_f64).ln();
        assert!((slope - 1.5).abs() <= 0.2, "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn caputo_l1_convergence_order_is_two_minus_alpha() {
        for alpha in [0.3, 0.5, 0.8] {
            let errs: Vec<f64> = [40, 80, 160, 320]
                .iter()
                .map(|&n| caputo_t3_error(alpha, n))
                .collect();
            let slope = (errs[0] / errs[3]).ln() / (8.0_f64).ln();
            assert!(
                (slope - (2.0 - alpha)).abs() <= 0.2,
                "alpha {alpha}: slope {slope}, errors {errs:?}"
            );
        }
    }

    #[test]
    fn weight_form_matches_difference_form() {
        let mut state = 7u64;
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 23;
        let dt = 1.0 / n as f64;
        let u: Vec<f64> = (0..=n).map(|_| rng()).collect();
        for m in 1..=n {
            let w = caputo_l1_weights(0.7, dt, m).unwrap();
            let by_weights: f64 = w.iter().zip(&u).map(|(wi, ui)| wi * ui).sum();
            let by_diff = caputo_l1(&u, 0.7, dt, m).unwrap();
            assert!((by_weights - by_diff).abs() < 1e-10);
        }
    }

    #[test]
    fn rl_integral_examples() {
        // f ≡ 0.
        let z = vec![0.0; 11];
        assert_eq!(rl_integral_discrete(&z, 0.5, 0.1, 10).unwrap(), 0.0);
        // f ≡ 1: I^α 1 = t^α / Γ(α+1); exact for piecewise-linear data.
        let n_t = 160;
        let dt = 1.0 / n_t as f64;
        let ones = vec![1.0; n_t + 1];
        let got = rl_integral_discrete(&ones, 0.5, dt, n_t).unwrap();
        let want = 1.0 / gamma(1.5);
        assert!((got - want).abs() <= 1e-3, "got {got}, want {want}");
        // f = t: I^α t = t^{1+α} / Γ(2+α).
        let lin: Vec<f64> = (0..=n_t).map(|k| k as f64 * dt).collect();
        let got = rl_integral_discrete(&lin, 0.5, dt, n_t).unwrap();
        let want = gamma(2.0) / gamma(2.5);
        assert!((got - want).abs() <= 1e-3, "got {got}, want {want}");
    }

    #[test]
    fn lemma1_examples() {
        // Constant h: both discrete operators vanish identically.
        assert_eq!(lemma1_check(|_| 4.2, 0.5, 40).unwrap(), 0.0);
        // h = t^3 at α = 0.5.
        let r = lemma1_check(|t| t * t * t, 0.5, 160).unwrap();
        assert!(r <= 5e-3, "residual {r}");
        // Refinement decreases the residual monotonically for h = t.
        let rs: Vec<f64> = [40, 80, 160, 320]
            .iter()
            .map(|&n| lemma1_check(|t| t, 0.3, n).unwrap())
            .collect();
        for w in rs.windows(2) {
            assert!(w[1] < w[0], "not monotone: {rs:?}");
        }
    }

    #[test]
    fn lemma1_residual_decreases_under_refinement() {
        let funcs: Vec<(&str, fn(f64) -> f64)> = vec![
            ("t", |t| t),
            ("t^2", |t| t * t),
            ("t^3", |t| t * t * t),
            ("sin t", f64::sin),
        ];
        for (name, h) in funcs {
            let coarse = lemma1_check(h, 0.5, 40).unwrap();
            let mid = lemma1_check(h, 0.5, 160).unwrap();
            let fine = lemma1_check(h, 0.5, 640).unwrap();
            assert!(
                mid < coarse && fine < mid,
                "{name}: {coarse} -> {mid} -> {fine}"
            );
            assert!(mid <= 5e-3, "{name} residual at 160 steps: {mid}");
        }
    }
}
