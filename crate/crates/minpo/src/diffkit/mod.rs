//! Automatic differentiation: reverse mode for parameter gradients, nested
//! forward mode for input derivatives up to third-order mixed partials.
//!
//! Expressions are recorded define-by-run into a [`Program`] (see `tape`),
//! replayed with any [`Scalar`](crate::scalar::Scalar) backend (see `exec`),
//! and differentiated forward with [`Taylor`] jets or backward with the
//! adjoint sweep. Parameter counts in the solvers are O(10^3), so losses go
//! through reverse mode; input derivatives involve at most four directions
//! and go through nested forward jets.

mod exec;
mod tape;
mod taylor;

pub use exec::{ChunkBuf, CHUNK};
pub use tape::{Instr, Op, Program, Var};
pub use taylor::{JetOf, Taylor};


use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffError {
    #[error("point dimension {got} does not match graph arity {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input derivative order {total} exceeds the supported maximum of 3")]
    UnsupportedOrder { total: usize },
    #[error("graph expects {expected} parameters, got {got}")]
    ParamMismatch { expected: usize, got: usize },
    #[error("non-finite intermediate value at graph node {node}")]
    NonFinite { node: u32 },
    #[error("operation requires a single scalar output, graph has {got}")]
    NotScalar { got: usize },
}

/// What to differentiate with respect to.
#[derive(Debug, Clone, PartialEq)]
pub enum Wrt {
    /// First-order gradient with respect to all parameters.
    Params,
    /// Mixed input derivative of the given multi-index (one entry per input).
    Inputs(Vec<usize>),
}

/// A derivative request against a recorded graph.
#[derive(Debug, Clone)]
pub struct GradientRequest {
    pub wrt: Wrt,
}

impl GradientRequest {
    pub fn validate(&self, prog: &Program) -> Result<(), DiffError> {
        match &self.wrt {
            Wrt::Params => Ok(()),
            Wrt::Inputs(order) => {
                if order.len() != prog.n_inputs() {
                    return Err(DiffError::DimensionMismatch {
                        expected: prog.n_inputs(),
                        got: order.len(),
                    });
                }
                let total: usize = order.iter().sum();
                if total > 3 {
                    return Err(DiffError::UnsupportedOrder { total });
                }
                Ok(())
            }
        }
    }
}

/// Plain evaluation of a parameter-free graph at a point.
pub fn eval(prog: &Program, point: &[f64]) -> Result<f64, DiffError> {
    if prog.n_params() != 0 {
        return Err(DiffError::ParamMismatch { expected: 0, got: prog.n_params() });
    }
    if point.len() != prog.n_inputs() {
        return Err(DiffError::DimensionMismatch {
            expected: prog.n_inputs(),
            got: point.len(),
        });
    }
    if prog.n_outputs() != 1 {
        return Err(DiffError::NotScalar { got: prog.n_outputs() });
    }
    Ok(prog.exec_generic::<f64>(&[], point)[0])
}

type T1 = Taylor<f64, 4>;
type T2 = Taylor<T1, 4>;
type T3 = Taylor<T2, 4>;

/// Mixed input derivative `∂^{|γ|} f / ∂ξ^γ` at `point`, `|γ| <= 3`.
///
/// Implemented with a three-level nest of order-3 jets: a multi-index of
/// total order 3 touches at most three distinct inputs, each with order at
/// most 3, so one static nest covers every admissible request.
pub fn input_derivative(
    prog: &Program,
    point: &[f64],
    multi_index: &[usize],
) -> Result<f64, DiffError> {
    if prog.n_params() != 0 {
        return Err(DiffError::ParamMismatch { expected: 0, got: prog.n_params() });
    }
    if point.len() != prog.n_inputs() || multi_index.len() != prog.n_inputs() {
        return Err(DiffError::DimensionMismatch {
            expected: prog.n_inputs(),
            got: point.len().max(multi_index.len()),
        });
    }
    if prog.n_outputs() != 1 {
        return Err(DiffError::NotScalar { got: prog.n_outputs() });
    }
    let total: usize = multi_index.iter().sum();
    if total > 3 {
        return Err(DiffError::UnsupportedOrder { total });
    }

    let active: Vec<usize> = (0..multi_index.len()).filter(|&i| multi_index[i] > 0).collect();
    let mut seeds: Vec<T3> = Vec::with_capacity(point.len());
    for (i, &x) in point.iter().enumerate() {
        let level = active.iter().position(|&a| a == i);
        seeds.push(match level {
            None => T3::constant(T2::constant(T1::constant(x))),
            Some(0) => T3::var(T2::constant(T1::constant(x))),
            Some(1) => T3::constant(T2::var(T1::constant(x))),
            Some(2) => T3::constant(T2::constant(T1::var(x))),
            Some(_) => unreachable!("at most three active inputs when |γ| <= 3"),
        });
    }
    let out = prog.exec_generic::<T3>(&[], &seeds)[0];
    let ord = |lvl: usize| active.get(lvl).map_or(0, |&a| multi_index[a]);
    let (o0, o1, o2) = (ord(0), ord(1), ord(2));
    let coeff = out.coeff(o0).coeff(o1).coeff(o2);
    let fact = |n: usize| -> f64 { (1..=n).map(|v| v as f64).product() };
    Ok(coeff * fact(o0) * fact(o1) * fact(o2))
}

/// Reverse-mode gradient of a scalar loss graph with respect to its
/// parameters. Fails with the offending node id on non-finite intermediates.
pub fn param_gradient(
    prog: &Program,
    params: &[f64],
    point: &[f64],
) -> Result<Vec<f64>, DiffError> {
    if params.len() != prog.n_params() {
        return Err(DiffError::ParamMismatch {
            expected: prog.n_params(),
            got: params.len(),
        });
    }
    if point.len() != prog.n_inputs() {
        return Err(DiffError::DimensionMismatch {
            expected: prog.n_inputs(),
            got: point.len(),
        });
    }
    if prog.n_outputs() != 1 {
        return Err(DiffError::NotScalar { got: prog.n_outputs() });
    }
    prog.exec_checked(params, point)
        .map_err(|node| DiffError::NonFinite { node })?;

    let mut buf = ChunkBuf::for_program(prog);
    let holders: Vec<[f64; 1]> = point.iter().map(|&x| [x]).collect();
    let slices: Vec<&[f64]> = holders.iter().map(|h| h.as_slice()).collect();
    prog.fill_params(params, &mut buf);
    prog.forward_chunk(&slices, 0, 1, &mut buf);
    let mut seeds = vec![[0.0; CHUNK]];
    seeds[0][0] = 1.0;
    let mut grad = vec![0.0; prog.n_params()];
    prog.reverse_chunk(&seeds, &mut buf, &mut grad);
    Ok(grad)
}

/// Dispatch a validated [`GradientRequest`].
pub fn gradient(
    prog: &Program,
    req: &GradientRequest,
    params: &[f64],
    point: &[f64],
) -> Result<Vec<f64>, DiffError> {
    req.validate(prog)?;
    match &req.wrt {
        Wrt::Params => param_gradient(prog, params, point),
        Wrt::Inputs(order) => Ok(vec![input_derivative(prog, point, order)?]),
    }
}
