//! Scalar abstraction shared by every numeric code path.
//!
//! All field evaluations, residuals and losses are written once, generically
//! over [`Scalar`]. The same function body then runs on
//!
//! * plain floats (`f64`) for oracles, metrics and the classical solver,
//! * [`Taylor`](crate::diffkit::Taylor) jets for forward-mode input
//!   derivatives, and
//! * the recording variable [`Var`](crate::diffkit::Var) that freezes the
//!   computation into a replayable [`Program`](crate::diffkit::Program) for
//!   reverse-mode parameter gradients.
//!
//! Only the primitives actually required by the models are part of the trait:
//! the four arithmetic operations plus `exp`, `sin`, `cos`, `sinh`, `cosh`,
//! `tanh`, `abs` and powers with constant exponent.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(c: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// `self * b + c` without a fused rounding step, so that every backend
    /// produces bit-identical values.
    fn mul_add(self, b: Self, c: Self) -> Self {
        self * b + c
    }

    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
    /// Absolute value with subgradient 0 at the origin.
    fn abs(self) -> Self;
    /// Sign of the underlying value with `signum0(0) = 0`, carried as a
    /// derivative-free constant. Used for the subgradient of `abs`.
    fn signum0(self) -> Self;
    /// Integer power (constant exponent).
    fn powi(self, n: i32) -> Self;
    /// Real power with a constant exponent.
    fn powf_const(self, p: f64) -> Self;

    /// True when every component of the value is finite.
    fn is_finite_all(&self) -> bool;
}

macro_rules! impl_scalar_for_float {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_f64(c: f64) -> Self {
                c as $t
            }
            fn exp(self) -> Self {
                num_traits::Float::exp(self)
            }
            fn sin(self) -> Self {
                num_traits::Float::sin(self)
            }
            fn cos(self) -> Self {
                num_traits::Float::cos(self)
            }
            fn sinh(self) -> Self {
                num_traits::Float::sinh(self)
            }
            fn cosh(self) -> Self {
                num_traits::Float::cosh(self)
            }
            fn tanh(self) -> Self {
                num_traits::Float::tanh(self)
            }
            fn abs(self) -> Self {
                num_traits::Float::abs(self)
            }
            fn signum0(self) -> Self {
                if self > 0.0 {
                    1.0
                } else if self < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            fn powi(self, n: i32) -> Self {
                num_traits::Float::powi(self, n)
            }
            fn powf_const(self, p: f64) -> Self {
                num_traits::Float::powf(self, p as $t)
            }
            fn is_finite_all(&self) -> bool {
                num_traits::Float::is_finite(*self)
            }
        }
    };
}

impl_scalar_for_float!(f32);
impl_scalar_for_float!(f64);
