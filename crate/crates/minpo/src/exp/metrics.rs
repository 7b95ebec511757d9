//! Relative-error evaluation on the fixed grids of each experiment.
//!
//! Grids: 1000 uniform points for the Volterra problem, 41^3 for the 3D
//! problem, 101 x 101 for the fractional solution field. The fractional
//! memory error is measured on the temporal L1 grid (101 x N_t), which is the
//! finest grid on which the discretized baseline defines its memory
//! reconstruction, so the comparison across methods is like for like.

use rayon::prelude::*;

use crate::baselines::relative_error;
use crate::encoders::FieldDef;
use crate::fractional::caputo_l1;
use crate::model::{
    u_theta_at, AnalyticField, EncoderField, Experiment, FieldLike, MemoryFields,
    ReconstructionMap,
};

use super::train::ParamLayout;

#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    pub e_u: f64,
    pub e_m: f64,
    pub e_kappa: Option<f64>,
}

/// Evaluation grid with precomputed exact values.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    pub points_u: Vec<Vec<f64>>,
    pub exact_u: Vec<f64>,
    pub points_m: Vec<Vec<f64>>,
    pub exact_m: Vec<f64>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn eval_grid(ex: &Experiment, n_t: usize) -> EvalGrid {
    let exact_u_field = ex.exact_u();
    let exact_m_field = ex.exact_m();
    let (points_u, points_m): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match ex {
        Experiment::Volterra { domain_len, .. } => {
            let ts: Vec<Vec<f64>> = linspace(0.0, *domain_len, 1000)
                .into_iter()
                .map(|t| vec![t])
                .collect();
            (ts.clone(), ts)
        }
        Experiment::Nonlocal3d => {
            let ax = linspace(0.0, 1.0, 41);
            let mut pts = Vec::with_capacity(41 * 41 * 41);
            for &x1 in &ax {
                for &x2 in &ax {
                    for &t in &ax {
                        pts.push(vec![x1, x2, t]);
                    }
                }
            }
            (pts.clone(), pts)
        }
        Experiment::FracDiffusion { .. } => {
            let xs = linspace(0.0, 1.0, 101);
            let ts = linspace(0.0, 1.0, 101);
            let mut pts_u = Vec::with_capacity(101 * 101);
            for &x in &xs {
                for &t in &ts {
                    pts_u.push(vec![x, t]);
                }
            }
            let dt = 1.0 / n_t as f64;
            let mut pts_m = Vec::with_capacity(101 * n_t);
            for &x in &xs {
                for n in 1..=n_t {
                    pts_m.push(vec![x, n as f64 * dt]);
                }
            }
            (pts_u, pts_m)
        }
    };
    let exact_u = points_u
        .iter()
        .map(|p| FieldLike::<f64>::eval(&exact_u_field, p))
        .collect();
    let exact_m = points_m
        .iter()
        .map(|p| FieldLike::<f64>::eval(&exact_m_field, p))
        .collect();
    EvalGrid { points_u, exact_u, points_m, exact_m }
}

/// A trained model viewed as predicted solution and memory fields.
pub enum FieldView<'a> {
    /// Learned memory operator with explicit reconstruction.
    Minpo {
        map: ReconstructionMap,
        fields: &'a MemoryFields,
        layout: &'a ParamLayout,
        params: &'a [f64],
    },
    /// Auxiliary-field network: solution is output 0, the memory operator is
    /// output `m_index`.
    Aux { net: &'a FieldDef, params: &'a [f64], m_index: usize },
    /// Single-output network whose memory reconstruction is the L1 Caputo
    /// sum of its own history on the temporal grid.
    Fpde { net: &'a FieldDef, params: &'a [f64], alpha: f64, n_t: usize },
}

impl FieldView<'_> {
    pub fn u_at(&self, xi: &[f64]) -> f64 {
        match self {
            FieldView::Minpo { map, fields, layout, params } => {
                let m = EncoderField {
                    def: &fields.memory,
                    params: &params[layout.primary.clone()],
                };
                let j = match (&fields.inverse, &layout.secondary) {
                    (Some(def), Some(r)) => Some(EncoderField { def, params: &params[r.clone()] }),
                    _ => None,
                };
                u_theta_at(*map, &m, j.as_ref(), xi)
            }
            FieldView::Aux { net, params, .. } => net.eval_multi(params, xi)[0],
            FieldView::Fpde { net, params, .. } => net.eval(params, xi),
        }
    }

    pub fn m_at(&self, xi: &[f64]) -> f64 {
        match self {
            FieldView::Minpo { fields, layout, params, .. } => {
                let m = EncoderField {
                    def: &fields.memory,
                    params: &params[layout.primary.clone()],
                };
                m.def.eval(m.params, xi)
            }
            FieldView::Aux { net, params, m_index } => net.eval_multi(params, xi)[*m_index],
            FieldView::Fpde { net, params, alpha, n_t } => {
                // L1 reconstruction on the temporal grid; off-grid times snap
                // to the enclosing step, matching the piecewise structure the
                // discretized residual imposes.
                let dt = 1.0 / *n_t as f64;
                let (x, t) = (xi[0], xi[1]);
                let n = ((t / dt).round() as usize).clamp(1, *n_t);
                let samples: Vec<f64> = (0..=n)
                    .map(|k| net.eval::<f64, f64>(params, &[x, k as f64 * dt]))
                    .collect();
                caputo_l1(&samples, *alpha, dt, n).expect("valid L1 configuration")
            }
        }
    }
}

/// Relative errors of the view against the grid's exact values.
pub fn evaluate(view: &FieldView, grid: &EvalGrid, kappa_hat: Option<(f64, f64)>) -> Metrics {
    let u_hat: Vec<f64> = grid.points_u.par_iter().map(|p| view.u_at(p)).collect();
    let m_hat: Vec<f64> = grid.points_m.par_iter().map(|p| view.m_at(p)).collect();
    let e_u = relative_error(&u_hat, &grid.exact_u).expect("nonzero exact norm");
    let e_m = relative_error(&m_hat, &grid.exact_m).expect("nonzero exact norm");
    let e_kappa = kappa_hat.map(|(hat, exact)| {
        crate::baselines::relative_error_scalar(hat, exact).expect("nonzero exact kappa")
    });
    Metrics { e_u, e_m, e_kappa }
}

/// Exact fields evaluated on the grid (used by the artifact emitter).
pub fn exact_on(points: &[Vec<f64>], field: &AnalyticField) -> Vec<f64> {
    points
        .iter()
        .map(|p| FieldLike::<f64>::eval(field, p))
        .collect()
}
