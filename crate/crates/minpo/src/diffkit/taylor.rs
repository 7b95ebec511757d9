//! Truncated univariate Taylor jets, nestable for mixed partial derivatives.
//!
//! `Taylor<S, N>` carries the Taylor coefficients `f, f', f''/2!, ...` of a
//! value along one perturbation direction. Because the component type is any
//! [`Scalar`], jets nest: `Taylor<Taylor<f64, 2>, 2>` propagates the mixed
//! second derivative of two variables, and jets over [`Var`](super::Var)
//! propagate input derivatives through a recorded program so that reverse mode
//! can differentiate them with respect to parameters.
//!
//! Coefficients are Taylor coefficients, not derivatives: the `k`-th
//! derivative is `coeff(k) * k!`. First-order jets (`N = 2`) need no factorial
//! correction, which is the common case in the residual code.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct Taylor<S, const N: usize>(pub [S; N]);

impl<S: Scalar, const N: usize> Taylor<S, N> {
    pub fn constant(v: S) -> Self {
        let mut c = [S::zero(); N];
        c[0] = v;
        Taylor(c)
    }

    /// Seed a perturbation variable: value `v`, unit first coefficient.
    pub fn var(v: S) -> Self {
        assert!(N >= 2, "a Taylor variable needs at least two components");
        let mut c = [S::zero(); N];
        c[0] = v;
        c[1] = S::one();
        Taylor(c)
    }

    pub fn coeff(&self, k: usize) -> S {
        self.0[k]
    }

    /// Derivative of order `k` along this jet's direction.
    pub fn derivative(&self, k: usize) -> S {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.0[k] * S::from_f64(fact)
    }
}

impl<S: Scalar, const N: usize> std::ops::Add for Taylor<S, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self.0;
        for k in 0..N {
            out[k] = out[k] + rhs.0[k];
        }
        Taylor(out)
    }
}

impl<S: Scalar, const N: usize> std::ops::Sub for Taylor<S, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self.0;
        for k in 0..N {
            out[k] = out[k] - rhs.0[k];
        }
        Taylor(out)
    }
}

impl<S: Scalar, const N: usize> std::ops::Neg for Taylor<S, N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut out = self.0;
        for k in 0..N {
            out[k] = -out[k];
        }
        Taylor(out)
    }
}

impl<S: Scalar, const N: usize> std::ops::Mul for Taylor<S, N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [S::zero(); N];
        for k in 0..N {
            let mut acc = self.0[0] * rhs.0[k];
            for i in 1..=k {
                acc = self.0[i].mul_add(rhs.0[k - i], acc);
            }
            out[k] = acc;
        }
        Taylor(out)
    }
}

impl<S: Scalar, const N: usize> std::ops::Div for Taylor<S, N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let mut out = [S::zero(); N];
        out[0] = self.0[0] / rhs.0[0];
        for k in 1..N {
            let mut acc = self.0[k];
            for j in 0..k {
                acc = acc - out[j] * rhs.0[k - j];
            }
            out[k] = acc / rhs.0[0];
        }
        Taylor(out)
    }
}

impl<S: Scalar, const N: usize> Taylor<S, N> {
    /// Shared driver for unary functions with derivative weight `w`:
    /// `(k+1) g_{k+1} = sum_j w_j (k+1-j) a_{k+1-j}`. `update` refreshes `w`
    /// after each new coefficient when the weight depends on `g` itself.
    fn chain(
        a: &[S; N],
        g0: S,
        mut w: [S; N],
        mut update: impl FnMut(&[S; N], usize, &mut [S; N]),
    ) -> Self {
        let mut g = [S::zero(); N];
        g[0] = g0;
        for k in 0..N.saturating_sub(1) {
            let mut acc = S::zero();
            for j in 0..=k {
                let m = (k + 1 - j) as f64;
                acc = (w[j] * S::from_f64(m)).mul_add(a[k + 1 - j], acc);
            }
            g[k + 1] = acc / S::from_f64((k + 1) as f64);
            update(&g, k + 1, &mut w);
        }
        Taylor(g)
    }
}

impl<S: Scalar, const N: usize> Scalar for Taylor<S, N> {
    fn from_f64(c: f64) -> Self {
        Taylor::constant(S::from_f64(c))
    }

    fn mul_add(self, b: Self, c: Self) -> Self {
        let mut out = c.0;
        for k in 0..N {
            let mut acc = out[k];
            for i in 0..=k {
                acc = self.0[i].mul_add(b.0[k - i], acc);
            }
            out[k] = acc;
        }
        Taylor(out)
    }

    fn exp(self) -> Self {
        let g0 = self.0[0].exp();
        Self::chain(&self.0, g0, {
            let mut w = [S::zero(); N];
            w[0] = g0;
            w
        }, |g, k, w| w[k] = g[k])
    }

    fn sin(self) -> Self {
        sin_cos(&self.0).0
    }

    fn cos(self) -> Self {
        sin_cos(&self.0).1
    }

    fn sinh(self) -> Self {
        sinh_cosh(&self.0).0
    }

    fn cosh(self) -> Self {
        sinh_cosh(&self.0).1
    }

    fn tanh(self) -> Self {
        let g0 = self.0[0].tanh();
        let mut w0 = [S::zero(); N];
        w0[0] = S::one() - g0 * g0;
        Self::chain(&self.0, g0, w0, |g, k, w| {
            // w = 1 - g^2, refreshed one coefficient at a time.
            let mut acc = S::zero();
            for i in 0..=k {
                acc = g[i].mul_add(g[k - i], acc);
            }
            w[k] = -acc;
        })
    }

    fn abs(self) -> Self {
        let s = self.0[0].signum0();
        let mut out = self.0;
        out[0] = self.0[0].abs();
        for k in 1..N {
            out[k] = out[k] * s;
        }
        Taylor(out)
    }

    fn signum0(self) -> Self {
        Taylor::constant(self.0[0].signum0())
    }

    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let mut r = self;
        for _ in 1..n.unsigned_abs() {
            r = r * self;
        }
        if n < 0 {
            Self::one() / r
        } else {
            r
        }
    }

    fn powf_const(self, p: f64) -> Self {
        let a = &self.0;
        let mut g = [S::zero(); N];
        g[0] = a[0].powf_const(p);
        for m in 1..N {
            let mut acc = S::zero();
            for j in 0..m {
                let c = (m - j) as f64;
                acc = (g[j] * S::from_f64(p * c)).mul_add(a[m - j], acc);
            }
            for j in 1..m {
                let c = (m - j) as f64;
                acc = acc - (a[j] * S::from_f64(c)) * g[m - j];
            }
            g[m] = acc / (a[0] * S::from_f64(m as f64));
        }
        Taylor(g)
    }

    fn is_finite_all(&self) -> bool {
        self.0.iter().all(|c| c.is_finite_all())
    }
}

fn sin_cos<S: Scalar, const N: usize>(a: &[S; N]) -> (Taylor<S, N>, Taylor<S, N>) {
    let mut s = [S::zero(); N];
    let mut c = [S::zero(); N];
    s[0] = a[0].sin();
    c[0] = a[0].cos();
    for k in 0..N.saturating_sub(1) {
        let mut acc_s = S::zero();
        let mut acc_c = S::zero();
        for j in 0..=k {
            let m = S::from_f64((k + 1 - j) as f64);
            acc_s = (c[j] * m).mul_add(a[k + 1 - j], acc_s);
            acc_c = (s[j] * m).mul_add(a[k + 1 - j], acc_c);
        }
        let inv = S::from_f64(1.0 / (k + 1) as f64);
        s[k + 1] = acc_s * inv;
        c[k + 1] = -(acc_c * inv);
    }
    (Taylor(s), Taylor(c))
}

fn sinh_cosh<S: Scalar, const N: usize>(a: &[S; N]) -> (Taylor<S, N>, Taylor<S, N>) {
    let mut sh = [S::zero(); N];
    let mut ch = [S::zero(); N];
    sh[0] = a[0].sinh();
    ch[0] = a[0].cosh();
    for k in 0..N.saturating_sub(1) {
        let mut acc_s = S::zero();
        let mut acc_c = S::zero();
        for j in 0..=k {
            let m = S::from_f64((k + 1 - j) as f64);
            acc_s = (ch[j] * m).mul_add(a[k + 1 - j], acc_s);
            acc_c = (sh[j] * m).mul_add(a[k + 1 - j], acc_c);
        }
        let inv = S::from_f64(1.0 / (k + 1) as f64);
        sh[k + 1] = acc_s * inv;
        ch[k + 1] = acc_c * inv;
    }
    (Taylor(sh), Taylor(ch))
}

/// Types usable as jets over a base scalar `B`: the base embeds as the value
/// component with zero derivative payload.
pub trait JetOf<B: Scalar>: Scalar {
    fn from_base(b: B) -> Self;
}

impl JetOf<f64> for f64 {
    fn from_base(b: f64) -> Self {
        b
    }
}

impl JetOf<f32> for f32 {
    fn from_base(b: f32) -> Self {
        b
    }
}

impl JetOf<super::Var> for super::Var {
    fn from_base(b: super::Var) -> Self {
        b
    }
}

impl<B: Scalar, S: JetOf<B>, const N: usize> JetOf<B> for Taylor<S, N> {
    fn from_base(b: B) -> Self {
        Taylor::constant(S::from_base(b))
    }
}
