//! Classical fully discrete reference solver for the 3D nonlocal IDE:
//! first-order differences for the transport operator, Gauss–Legendre tensor
//! quadrature with trilinear interpolation for the memory term, and a
//! Picard–Jacobi fixed-point iteration that lags the nonlocal term to the
//! previous iterate.
//!
//! Two stencils are provided, both closed by Dirichlet data from the exact
//! traces on the full boundary of the cube (initial plane plus all spatial
//! and final faces), so the comparison isolates the stencil. The `Upwind`
//! scheme differences against the flow (backward in x1, x2 and t) and its
//! Jacobi map contracts through the causal ordering of the stencil. The
//! `Forward` scheme differences down-flow in all three axes, which keeps the
//! Jacobi map strictly diagonally dominant; differencing against the
//! transport direction is anti-dissipative and visibly corrupts the
//! reconstructed memory operator, which is the point of carrying both
//! variants. (Mixed-direction stencils have no convergent plain-Jacobi
//! iteration once the memory coupling feeds expansive transients back.)

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{AnalyticField, Experiment, FieldLike};
use crate::quadrature::{gauss_legendre, QuadratureRule};

#[derive(Debug, Error, PartialEq)]
pub enum FdError {
    #[error("grid needs at least 3 nodes per axis, got {0}")]
    GridTooSmall(usize),
    #[error("tolerance must be positive")]
    BadTolerance,
    #[error("no convergence after {iterations} sweeps; last update {last_update:e}")]
    NoConvergence { iterations: usize, last_update: f64 },
    #[error(transparent)]
    Quadrature(#[from] crate::quadrature::QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Forward,
    Upwind,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Forward => "forward",
            Scheme::Upwind => "upwind",
        }
    }
}

/// Uniform grid on [0,1]^3 with `n` nodes per axis; `u` is stored x1-major:
/// `u[(i*n + j)*n + k]` holds the value at `(i h, j h, k h)` with the third
/// index the time level.
#[derive(Debug, Clone)]
pub struct Grid3 {
    pub n: usize,
    pub h: f64,
    pub u: Vec<f64>,
}

impl Grid3 {
    pub fn new(n: usize) -> Result<Self, FdError> {
        if n < 3 {
            return Err(FdError::GridTooSmall(n));
        }
        Ok(Grid3 { n, h: 1.0 / (n - 1) as f64, u: vec![0.0; n * n * n] })
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.h
    }
}

/// Per-axis smearing weights: `w[m] = Σ_q wq kernel(p_q) hat_m(p_q)` for the
/// rule mapped onto `[0, upper]`, with `hat_m` the linear interpolation hats.
/// Contracting these against the grid values evaluates the quadrature of the
/// trilinearly interpolated field one axis at a time.
fn smear_weights(
    n: usize,
    h: f64,
    upper: f64,
    rule: &QuadratureRule,
    kernel: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if upper <= 0.0 {
        return w;
    }
    for (p, wq) in rule.mapped(0.0, upper) {
        let s = (p / h).clamp(0.0, (n - 1) as f64);
        let m = (s.floor() as usize).min(n - 2);
        let frac = s - m as f64;
        let kw = kernel(p) * wq;
        w[m] += kw * (1.0 - frac);
        w[m + 1] += kw * frac;
    }
    w
}

fn contract(grid: &Grid3, u: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let n = grid.n;
    let mut total = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut plane = 0.0;
        for (j, &bj) in b.iter().enumerate() {
            if bj == 0.0 {
                continue;
            }
            let row = &u[grid.idx(i, j, 0)..grid.idx(i, j, 0) + n];
            let mut line = 0.0;
            for (k, &ck) in c.iter().enumerate() {
                line += ck * row[k];
            }
            plane += bj * line;
        }
        total += ai * plane;
    }
    total
}

/// Gauss–Legendre evaluation of the nested memory integral
/// `∫_0^{x2}∫_0^{x1}∫_0^t e^{tau-t} u` at a grid node, with `u` trilinearly
/// interpolated between nodes.
pub fn fd_memory_eval(grid: &Grid3, u: &[f64], node: (usize, usize, usize), n_i: usize) -> f64 {
    let rule = gauss_legendre(n_i).expect("valid quadrature size");
    let (i, j, k) = node;
    let (x1, x2, t) = (grid.coord(i), grid.coord(j), grid.coord(k));
    if x1 == 0.0 || x2 == 0.0 || t == 0.0 {
        return 0.0;
    }
    let a = smear_weights(grid.n, grid.h, x1, &rule, |_| 1.0);
    let b = smear_weights(grid.n, grid.h, x2, &rule, |_| 1.0);
    let c = smear_weights(grid.n, grid.h, t, &rule, |tau| Experiment::kernel(tau, t));
    contract(grid, u, &a, &b, &c)
}

#[derive(Debug, Clone)]
pub struct FdSolution {
    pub grid: Grid3,
    pub iterations: usize,
    /// Max-norm update of every sweep, for convergence diagnostics.
    pub updates: Vec<f64>,
}

/// Picard–Jacobi solve of the discrete system: at each node the discretized
/// transport operator balances `u + memory(previous iterate) + f`; the sweep
/// stops when the max update falls below `tol`.
pub fn picard_jacobi_solve(
    n_x: usize,
    scheme: Scheme,
    n_i: usize,
    tol: f64,
    max_iter: usize,
    source: impl Fn(f64, f64, f64) -> f64 + Sync,
    boundary: impl Fn(f64, f64, f64) -> f64 + Sync,
) -> Result<FdSolution, FdError> {
    if tol <= 0.0 {
        return Err(FdError::BadTolerance);
    }
    let rule = gauss_legendre(n_i)?;
    let mut grid = Grid3::new(n_x)?;
    let n = grid.n;
    let h = grid.h;
    let c = 1.0 / h;

    let is_data = |i: usize, j: usize, k: usize| -> bool {
        i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1
    };

    // Impose Dirichlet data once; those entries never change.
    let mut init = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if is_data(i, j, k) {
                    init[grid.idx(i, j, k)] =
                        boundary(grid.coord(i), grid.coord(j), grid.coord(k));
                }
            }
        }
    }
    grid.u = init;

    // Lane-wise precomputation: the spatial smearing weights depend only on
    // the target index along their own axis, the temporal ones also carry the
    // kernel.
    let spatial: Vec<Vec<f64>> = (0..n)
        .map(|i| smear_weights(n, h, grid.coord(i), &rule, |_| 1.0))
        .collect();
    let temporal: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let t = grid.coord(k);
            smear_weights(n, h, t, &rule, |tau| Experiment::kernel(tau, t))
        })
        .collect();
    let f_nodes: Vec<f64> = (0..n * n * n)
        .map(|idx| {
            let k = idx % n;
            let j = (idx / n) % n;
            let i = idx / (n * n);
            source(grid.coord(i), grid.coord(j), grid.coord(k))
        })
        .collect();

    let mut updates = Vec::new();
    for sweep in 0..max_iter {
        let old = &grid.u;
        let new: Vec<f64> = (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let k = idx % n;
                let j = (idx / n) % n;
                let i = idx / (n * n);
                if is_data(i, j, k) {
                    return old[idx];
                }
                let mem = contract(&grid, old, &spatial[i], &spatial[j], &temporal[k]);
                let f = f_nodes[idx];
                match scheme {
                    Scheme::Upwind => {
                        let nbrs = old[grid.idx(i - 1, j, k)]
                            + old[grid.idx(i, j - 1, k)]
                            + old[grid.idx(i, j, k - 1)];
                        (c * nbrs + mem + f) / (3.0 * c - 1.0)
                    }
                    Scheme::Forward => {
                        let fwd = old[grid.idx(i + 1, j, k)]
                            + old[grid.idx(i, j + 1, k)]
                            + old[grid.idx(i, j, k + 1)];
                        (c * fwd - mem - f) / (3.0 * c + 1.0)
                    }
                }
            })
            .collect();
        let delta = new
            .iter()
            .zip(old)
            .map(|(a, b)| {
                let d = (a - b).abs();
                if d.is_nan() {
                    f64::INFINITY
                } else {
                    d
                }
            })
            .fold(0.0_f64, f64::max);
        grid.u = new;
        updates.push(delta);
        if delta <= tol {
            return Ok(FdSolution { grid, iterations: sweep + 1, updates });
        }
    }
    Err(FdError::NoConvergence {
        iterations: max_iter,
        last_update: updates.last().copied().unwrap_or(f64::NAN),
    })
}

/// Solve the 3D experiment with its derived source and exact boundary traces.
pub fn solve_experiment(
    n_x: usize,
    scheme: Scheme,
    n_i: usize,
    tol: f64,
    max_iter: usize,
) -> Result<FdSolution, FdError> {
    let ex = Experiment::Nonlocal3d;
    let exact = AnalyticField::U3d;
    picard_jacobi_solve(
        n_x,
        scheme,
        n_i,
        tol,
        max_iter,
        move |x1, x2, t| ex.source(&[x1, x2, t]),
        move |x1, x2, t| FieldLike::<f64>::eval(&exact, &[x1, x2, t]),
    )
}

/// Relative L2 errors of a solution against the exact fields, over all grid
/// nodes: `(error_u, error_m)` with the memory error measured on the
/// solver's own quadrature evaluation of the nonlocal term.
pub fn solution_errors(sol: &FdSolution, n_i: usize) -> (f64, f64) {
    let grid = &sol.grid;
    let n = grid.n;
    let exact_u = AnalyticField::U3d;
    let exact_m = AnalyticField::M3d;
    let mut u_hat = Vec::with_capacity(n * n * n);
    let mut u_star = Vec::with_capacity(n * n * n);
    let mut m_hat = Vec::with_capacity(n * n * n);
    let mut m_star = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let xi = [grid.coord(i), grid.coord(j), grid.coord(k)];
                u_hat.push(grid.u[grid.idx(i, j, k)]);
                u_star.push(FieldLike::<f64>::eval(&exact_u, &xi));
                m_hat.push(fd_memory_eval(grid, &grid.u, (i, j, k), n_i));
                m_star.push(FieldLike::<f64>::eval(&exact_m, &xi));
            }
        }
    }
    let eu = crate::baselines::relative_error(&u_hat, &u_star).expect("nonzero exact norm");
    let em = crate::baselines::relative_error(&m_hat, &m_star).expect("nonzero exact norm");
    (eu, em)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_problem_converges_to_zero() {
        let sol = picard_jacobi_solve(8, Scheme::Upwind, 6, 1e-10, 100, |_, _, _| 0.0, |_, _, _| 0.0)
            .unwrap();
        assert!(sol.grid.u.iter().all(|&v| v.abs() <= 1e-10));
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn memory_eval_of_zero_field_is_zero() {
        let grid = Grid3::new(6).unwrap();
        let u = vec![0.0; 6 * 6 * 6];
        assert_eq!(fd_memory_eval(&grid, &u, (3, 4, 5), 8), 0.0);
    }

    #[test]
    fn memory_eval_vanishes_on_coordinate_planes() {
        let grid = Grid3::new(6).unwrap();
        let u = vec![1.0; 6 * 6 * 6];
        assert_eq!(fd_memory_eval(&grid, &u, (0, 3, 3), 8), 0.0);
        assert_eq!(fd_memory_eval(&grid, &u, (3, 0, 3), 8), 0.0);
        assert_eq!(fd_memory_eval(&grid, &u, (3, 3, 0), 8), 0.0);
    }

    #[test]
    fn memory_eval_matches_closed_form_at_far_corner() {
        let n = 25;
        let mut grid = Grid3::new(n).unwrap();
        let exact = AnalyticField::U3d;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = grid.idx(i, j, k);
                    grid.u[idx] = FieldLike::<f64>::eval(
                        &exact,
                        &[grid.coord(i), grid.coord(j), grid.coord(k)],
                    );
                }
            }
        }
        let got = fd_memory_eval(&grid, &grid.u.clone(), (n - 1, n - 1, n - 1), 20);
        let want = ((-1.0_f64).exp()) * (1.0 - 1.0_f64.cos()) * 1.0_f64.sin();
        assert!((got - want).abs() <= 5e-3, "got {got}, want {want}");
    }

    #[test]
    fn sweeps_contract_after_startup() {
        let sol = solve_experiment(10, Scheme::Upwind, 8, 1e-10, 2000).unwrap();
        for w in sol.updates.windows(2).skip(3) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "updates not contracting: {w:?}");
        }
    }

    #[test]
    fn upwind_beats_forward_and_error_shrinks_with_the_grid() {
        // The downwind stencil corrupts the reconstructed memory operator;
        // the solution-field errors of the two box-closed stencils sit within
        // ~10% of each other, so the robust ordering lives in e_M.
        let mut prev = f64::INFINITY;
        for n_x in [10, 15] {
            let up = solve_experiment(n_x, Scheme::Upwind, 10, 1e-10, 2000).unwrap();
            let fw = solve_experiment(n_x, Scheme::Forward, 10, 1e-10, 2000).unwrap();
            let (eu_up, em_up) = solution_errors(&up, 10);
            let (eu_fw, em_fw) = solution_errors(&fw, 10);
            assert!(em_up <= em_fw, "n_x={n_x}: upwind e_M {em_up} vs forward {em_fw}");
            assert!(eu_up <= 1.25 * eu_fw, "n_x={n_x}: upwind e_u {eu_up} vs forward {eu_fw}");
            assert!(eu_up < prev, "n_x={n_x}: error did not decrease ({eu_up} vs {prev})");
            prev = eu_up;
        }
    }
}
