//! Gauss–Legendre quadrature and its composition into running 1D (Volterra)
//! integrals and nested 3D integrals.
//!
//! Nodes are the roots of the Legendre polynomial `P_n`, found by Newton
//! iteration from Chebyshev initial guesses; weights are
//! `2 / ((1 - x^2) P_n'(x)^2)`. An n-point rule integrates polynomials up to
//! degree `2n - 1` exactly, which is what the consistency losses rely on for
//! smooth kernels.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("point count {0} outside the supported range 1..=64")]
    BadPointCount(usize),
    #[error("Newton iteration for node {0} failed to converge")]
    NewtonDiverged(usize),
}

/// Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Evaluate `P_n` and `P_n'` at `x` by the three-term recurrence.
fn legendre_with_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Build the n-point Gauss–Legendre rule, `1 <= n <= 64`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule, QuadratureError> {
    if !(1..=64).contains(&n) {
        return Err(QuadratureError::BadPointCount(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(QuadratureError::NewtonDiverged(i));
        }
        let (_, dp) = legendre_with_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Store in ascending order and mirror about zero so the rule is
        // exactly symmetric.
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights affinely mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Integrate `f` over `[a, b]`; `a == b` yields exactly zero.
    pub fn integrate_1d(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if a == b {
            return 0.0;
        }
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Tensor-product integration of `f(y1, y2, tau)` over
    /// `[0, x1] x [0, x2] x [0, t]` with `upper = (x1, x2, t)`.
    pub fn integrate_3d_nested(
        &self,
        upper: (f64, f64, f64),
        mut f: impl FnMut(f64, f64, f64) -> f64,
    ) -> f64 {
        let (x1, x2, t) = upper;
        if x1 == 0.0 || x2 == 0.0 || t == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (y1, w1) in self.mapped(0.0, x1) {
            for (y2, w2) in self.mapped(0.0, x2) {
                for (tau, wt) in self.mapped(0.0, t) {
                    total += w1 * w2 * wt * f(y1, y2, tau);
                }
            }
        }
        total
    }
}
