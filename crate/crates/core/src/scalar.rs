//! Numeric abstraction shared by the plain forward pass and the
//! gradient-recording pass.
//!
//! Every differentiable computation in the crate is written once over a
//! [`Scalar`]. `f64` (and `f32`) evaluate directly; [`crate::autodiff::Var`]
//! records each operation on a thread-local tape so the same code yields
//! exact reverse-mode gradients.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Default
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    /// True when operations are recorded for differentiation.
    const TRACKED: bool;

    fn constant(v: f64) -> Self;
    fn value(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn abs(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn silu(self) -> Self;
    /// `sqrt(max(x, 0))` with derivative 0 for `x <= 0`.
    fn sqrt_relu(self) -> Self;

    /// Inner product of two equally long slices.
    fn dot(a: &[Self], b: &[Self]) -> Self;
    /// Inner product against constant coefficients.
    fn dot_const(a: &[Self], b: &[f64]) -> Self;
    fn sum(xs: &[Self]) -> Self;

    /// Builds a value from an externally computed result and its local
    /// partial derivatives with respect to `parents`.
    fn from_op(value: f64, parents: &[(Self, f64)]) -> Self;

    fn zero() -> Self {
        Self::constant(0.0)
    }

    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }

    fn square(self) -> Self {
        self * self
    }
}

#[inline]
pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn softplus_f64(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Four-lane accumulation; the lane layout is fixed so results are
/// reproducible bit for bit.
#[inline]
pub(crate) fn dot_f64(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let mut acc = [0.0f64; 4];
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Scalar for f64 {
    const TRACKED: bool = false;

    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    fn softplus(self) -> Self {
        softplus_f64(self)
    }
    fn silu(self) -> Self {
        self * sigmoid_f64(self)
    }
    fn sqrt_relu(self) -> Self {
        self.max(0.0).sqrt()
    }
    #[inline]
    fn dot(a: &[Self], b: &[Self]) -> Self {
        dot_f64(a, b)
    }
    #[inline]
    fn dot_const(a: &[Self], b: &[f64]) -> Self {
        dot_f64(a, b)
    }
    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
    fn from_op(value: f64, _parents: &[(Self, f64)]) -> Self {
        value
    }
}

/// Reduced-precision evaluation. Weights are stored in 64 bits and
/// rounded on entry.
impl Scalar for f32 {
    const TRACKED: bool = false;

    fn constant(v: f64) -> Self {
        v as f32
    }
    fn value(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    fn sin(self) -> Self {
        f32::sin(self)
    }
    fn cos(self) -> Self {
        f32::cos(self)
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self as f64) as f32
    }
    fn softplus(self) -> Self {
        softplus_f64(self as f64) as f32
    }
    fn silu(self) -> Self {
        self * (sigmoid_f64(self as f64) as f32)
    }
    fn sqrt_relu(self) -> Self {
        self.max(0.0).sqrt()
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
    fn dot_const(a: &[Self], b: &[f64]) -> Self {
        a.iter().zip(b).map(|(x, y)| x * (*y as f32)).sum()
    }
    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }
    fn from_op(value: f64, _parents: &[(Self, f64)]) -> Self {
        value as f32
    }
}
