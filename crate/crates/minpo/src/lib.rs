//! Neural pseudo-operator solver for integro-differential equations with
//! spatial nonlocality and temporal memory.
//!
//! The method learns a continuous neural representation of the nonlocal
//! memory operator of an IDE (and, for fractional problems, of its inverse)
//! and reconstructs the solution field through an explicit closed-form map.
//! Training balances three terms: a fully continuous IDE residual, a data
//! term for initial/boundary/measurement constraints, and a discretized
//! nonlocal consistency term tying the learned operator to its integral
//! definition.
//!
//! Crate layout:
//!
//! * [`scalar`] / [`diffkit`] — scalar abstraction and the AD engine
//!   (reverse mode over recorded programs, nested forward jets).
//! * [`encoders`] — MLP and Chebyshev-KAN field encoders, input scaling,
//!   hard-constraint wrappers, checkpoints.
//! * [`quadrature`] — Gauss–Legendre rules, 1D and nested 3D integrals.
//! * [`fractional`] — L1 Caputo discretization, discrete Riemann–Liouville
//!   integral, inverse-identity diagnostics.
//! * [`model`] — problem definitions, reconstruction maps, composite loss.
//! * [`baselines`] — auxiliary-field and discretized-residual reference
//!   solvers plus the shared relative-error metric.
//! * [`fd`] — classical Picard–Jacobi finite-difference reference solver.
//! * [`optim`] — Adam and L-BFGS with a strong-Wolfe line search.
//! * [`exp`] — experiment configurations, sampling, training orchestration
//!   and artifact output.

pub mod baselines;
pub mod diffkit;
pub mod encoders;
pub mod exp;
pub mod fd;
pub mod fractional;
pub mod model;
pub mod optim;
pub mod quadrature;
pub mod scalar;

/// Numeric type used by every solver path. Reported errors reach 1e-5, which
/// rules out single precision.
pub type Real = f64;

pub use scalar::Scalar;
