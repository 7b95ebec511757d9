//! Optimizers for the two-phase training schedule: Adam for the stochastic
//! warm-up phase, then L-BFGS with a strong Wolfe line search to polish.
//!
//! Both work on flat `f64` parameter vectors against a full-batch
//! loss-and-gradient callback, which keeps the quasi-Newton model well posed.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient entry at coordinate {0}")]
    NonFiniteGradient(usize),
    #[error("gradient length {got} does not match parameter length {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        AdamState { cfg, step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update; `params` and `grad` must have the state's length.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<(), OptimError> {
        if grad.len() != self.m.len() || params.len() != self.m.len() {
            return Err(OptimError::LengthMismatch { expected: self.m.len(), got: grad.len() });
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient(i));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    /// Curvature-pair history size; 0 degenerates to line-searched descent.
    pub history: usize,
    /// Armijo constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Line-search evaluation budget per step.
    pub max_line_search: usize,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { history: 20, c1: 1e-4, c2: 0.9, max_line_search: 25, grad_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Step accepted under the strong Wolfe conditions.
    Accepted { step_size: f64 },
    /// Gradient norm below tolerance; parameters unchanged.
    Converged,
    /// No acceptable step within the evaluation budget; parameters unchanged.
    LineSearchFailed,
}

/// L-BFGS state: ring buffer of curvature pairs plus the cached loss and
/// gradient at the current iterate.
pub struct LbfgsState {
    cfg: LbfgsConfig,
    s_hist: VecDeque<Vec<f64>>,
    y_hist: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
    fx: f64,
    gx: Vec<f64>,
    ready: bool,
}

impl LbfgsState {
    pub fn new(cfg: LbfgsConfig) -> Self {
        LbfgsState {
            cfg,
            s_hist: VecDeque::new(),
            y_hist: VecDeque::new(),
            rho: VecDeque::new(),
            fx: f64::INFINITY,
            gx: Vec::new(),
            ready: false,
        }
    }

    pub fn current_loss(&self) -> f64 {
        self.fx
    }

    pub fn grad_norm(&self) -> f64 {
        self.gx.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Two-loop recursion: returns the approximate Newton direction `-H g`.
    fn direction(&self) -> Vec<f64> {
        let n = self.gx.len();
        let mut q = self.gx.clone();
        let k = self.s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let a = self.rho[i] * dot(&self.s_hist[i], &q);
            alpha[i] = a;
            axpy(-a, &self.y_hist[i], &mut q);
        }
        if k > 0 {
            let s = &self.s_hist[k - 1];
            let y = &self.y_hist[k - 1];
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y_hist[i], &q);
            axpy(alpha[i] - beta, &self.s_hist[i], &mut q);
        }
        let mut d = q;
        d.iter_mut().for_each(|v| *v = -*v);
        debug_assert_eq!(d.len(), n);
        d
    }

    /// One L-BFGS iteration with a strong Wolfe line search.
    pub fn step(
        &mut self,
        params: &mut [f64],
        mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    ) -> StepOutcome {
        let n = params.len();
        if !self.ready {
            self.gx = vec![0.0; n];
            self.fx = f(params, &mut self.gx);
            self.ready = true;
        }
        if self.grad_norm() <= self.cfg.grad_tol {
            return StepOutcome::Converged;
        }
        let mut d = self.direction();
        let mut gtd = dot(&self.gx, &d);
        if gtd >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            d = self.gx.iter().map(|g| -g).collect();
            gtd = dot(&self.gx, &d);
            if gtd >= 0.0 {
                return StepOutcome::Converged;
            }
        }
        let t0 = if self.s_hist.is_empty() {
            // First step: conservative scaling like 1/max(1, |g|_1).
            (1.0f64).min(1.0 / self.gx.iter().map(|g| g.abs()).sum::<f64>().max(1e-12))
        } else {
            1.0
        };
        match strong_wolfe(&mut f, params, &d, self.fx, &self.gx, gtd, t0, &self.cfg) {
            Some(found) => {
                let mut s = vec![0.0; n];
                for i in 0..n {
                    s[i] = found.t * d[i];
                    params[i] += s[i];
                }
                let y: Vec<f64> =
                    found.g.iter().zip(&self.gx).map(|(gn, go)| gn - go).collect();
                let sy = dot(&s, &y);
                if sy > 1e-10 * norm(&s) * norm(&y) && self.cfg.history > 0 {
                    if self.s_hist.len() == self.cfg.history {
                        self.s_hist.pop_front();
                        self.y_hist.pop_front();
                        self.rho.pop_front();
                    }
                    self.rho.push_back(1.0 / sy);
                    self.s_hist.push_back(s);
                    self.y_hist.push_back(y);
                }
                self.fx = found.f;
                self.gx = found.g;
                StepOutcome::Accepted { step_size: found.t }
            }
            None => StepOutcome::LineSearchFailed,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

struct WolfePoint {
    t: f64,
    f: f64,
    g: Vec<f64>,
}

/// Cubic interpolation of a step inside `bounds` from two (t, f, f') points.
fn cubic_interpolate(
    x1: f64,
    f1: f64,
    g1: f64,
    x2: f64,
    f2: f64,
    g2: f64,
    bounds: (f64, f64),
) -> f64 {
    let (lo, hi) = bounds;
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        min_pos.clamp(lo.min(hi), lo.max(hi))
    } else {
        0.5 * (lo + hi)
    }
}

/// Strong Wolfe bracketing/zoom line search along direction `d`.
fn strong_wolfe(
    f: &mut impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: &[f64],
    d: &[f64],
    f0: f64,
    g0: &[f64],
    gtd0: f64,
    t_init: f64,
    cfg: &LbfgsConfig,
) -> Option<WolfePoint> {
    let n = x0.len();
    let mut xt = vec![0.0; n];
    let mut eval = |t: f64, g: &mut Vec<f64>| -> f64 {
        for i in 0..n {
            xt[i] = x0[i] + t * d[i];
        }
        f(&xt, g)
    };

    let mut t = t_init;
    let mut t_prev = 0.0;
    let mut f_prev = f0;
    let mut g_prev = g0.to_vec();
    let mut gtd_prev = gtd0;
    let mut evals = 0usize;

    let mut g_new = vec![0.0; n];
    let mut f_new = eval(t, &mut g_new);
    evals += 1;
    let mut gtd_new = dot(&g_new, d);

    // Bracketing phase.
    let mut bracket: [f64; 2];
    let mut bracket_f: [f64; 2];
    let mut bracket_g: [Vec<f64>; 2];
    let mut bracket_gtd: [f64; 2];
    loop {
        if f_new > f0 + cfg.c1 * t * gtd0 || (evals > 1 && f_new >= f_prev) {
            bracket = [t_prev, t];
            bracket_f = [f_prev, f_new];
            bracket_g = [g_prev, g_new.clone()];
            bracket_gtd = [gtd_prev, gtd_new];
            break;
        }
        if gtd_new.abs() <= -cfg.c2 * gtd0 {
            return Some(WolfePoint { t, f: f_new, g: g_new });
        }
        if gtd_new >= 0.0 {
            bracket = [t_prev, t];
            bracket_f = [f_prev, f_new];
            bracket_g = [g_prev, g_new.clone()];
            bracket_gtd = [gtd_prev, gtd_new];
            break;
        }
        if evals >= cfg.max_line_search {
            return None;
        }
        let min_step = t + 0.01 * (t - t_prev);
        let max_step = t * 10.0;
        let tmp = t;
        t = cubic_interpolate(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, (min_step, max_step));
        t_prev = tmp;
        f_prev = f_new;
        g_prev = std::mem::take(&mut g_new);
        gtd_prev = gtd_new;
        g_new = vec![0.0; n];
        f_new = eval(t, &mut g_new);
        evals += 1;
        gtd_new = dot(&g_new, d);
    }

    // Zoom phase.
    let mut insuf_progress = false;
    while evals < cfg.max_line_search {
        let (lo, hi) = if bracket_f[0] <= bracket_f[1] { (0, 1) } else { (1, 0) };
        let span = (bracket[1] - bracket[0]).abs();
        if span * d.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-14 {
            break;
        }
        let mut tz = cubic_interpolate(
            bracket[0],
            bracket_f[0],
            bracket_gtd[0],
            bracket[1],
            bracket_f[1],
            bracket_gtd[1],
            (bracket[0].min(bracket[1]), bracket[0].max(bracket[1])),
        );
        // Keep the trial strictly inside the bracket.
        let eps = 0.1 * span;
        let closest = bracket[0].min(bracket[1]);
        let farthest = bracket[0].max(bracket[1]);
        if (farthest - tz).min(tz - closest) < eps {
            if insuf_progress || tz >= farthest || tz <= closest {
                tz = if (tz - farthest).abs() < (tz - closest).abs() {
                    farthest - eps
                } else {
                    closest + eps
                };
                insuf_progress = false;
            } else {
                insuf_progress = true;
            }
        } else {
            insuf_progress = false;
        }
        let mut gz = vec![0.0; n];
        let fz = eval(tz, &mut gz);
        evals += 1;
        let gtdz = dot(&gz, d);
        if fz > f0 + cfg.c1 * tz * gtd0 || fz >= bracket_f[lo] {
            bracket[hi] = tz;
            bracket_f[hi] = fz;
            bracket_g[hi] = gz;
            bracket_gtd[hi] = gtdz;
        } else {
            if gtdz.abs() <= -cfg.c2 * gtd0 {
                return Some(WolfePoint { t: tz, f: fz, g: gz });
            }
            if gtdz * (bracket[hi] - bracket[lo]) >= 0.0 {
                bracket[hi] = bracket[lo];
                bracket_f[hi] = bracket_f[lo];
                bracket_g[hi] = bracket_g[lo].clone();
                bracket_gtd[hi] = bracket_gtd[lo];
            }
            bracket[lo] = tz;
            bracket_f[lo] = fz;
            bracket_g[lo] = gz;
            bracket_gtd[lo] = gtdz;
        }
    }
    None
}
