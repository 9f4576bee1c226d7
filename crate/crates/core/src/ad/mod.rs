//! Differentiation core.
//!
//! Everything differentiable in the crate is written once against [`Scalar`].
//! Three implementations plug into that code:
//!
//! * `f64` for plain evaluation,
//! * [`Dual`] for forward-mode tangents (screen axes, spatial axes, or a
//!   direction in parameter space; duals nest, so `Dual<Dual<f64, 3>, 3>`
//!   yields Hessians),
//! * [`Var`] for reverse-mode adjoints recorded on a [`Tape`].
//!
//! Nesting a dual over a tape variable (`Dual<Var, 2>`) gives the parameter
//! gradient of quantities that themselves are screen-space derivatives.

mod dual;
mod nested;
mod tape;

pub use dual::{Dual, ScreenDual, SpatialDual};
pub use nested::{
    dense_forward_gradient, lift_screen, nested_adjoint, with_screen_tangents, ThetaFn,
};
pub use tape::{Tape, Var};

use std::cell::Cell;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

thread_local! {
    static BRANCH_TIES: Cell<u64> = const { Cell::new(0) };
}

/// Number of branch selections (min/max/abs) that hit an exact tie on the
/// current thread. Tangents at such points are one-sided.
pub fn branch_tangent_count() -> u64 {
    BRANCH_TIES.with(|c| c.get())
}

pub fn reset_branch_tangent_count() {
    BRANCH_TIES.with(|c| c.set(0));
}

fn note_tie() {
    BRANCH_TIES.with(|c| c.set(c.get() + 1));
}

/// A real number that may carry derivative information.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;

    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    /// `self^k` for a constant exponent.
    fn powf(self, k: f64) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn recip(self) -> Self {
        Self::one() / self
    }

    /// Absolute value; the derivative at exactly zero takes the positive branch.
    fn abs(self) -> Self {
        let v = self.value();
        if v == 0.0 {
            note_tie();
        }
        if v < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Minimum that keeps the active branch's derivative; ties go to `self`.
    fn min_branch(self, other: Self) -> Self {
        let (a, b) = (self.value(), other.value());
        if a == b {
            note_tie();
        }
        if a <= b {
            self
        } else {
            other
        }
    }

    /// Maximum that keeps the active branch's derivative; ties go to `self`.
    fn max_branch(self, other: Self) -> Self {
        let (a, b) = (self.value(), other.value());
        if a == b {
            note_tie();
        }
        if a >= b {
            self
        } else {
            other
        }
    }

    /// `ln(1 + exp(beta x)) / beta`, evaluated without overflow.
    fn softplus(self, beta: f64) -> Self {
        let z = self * beta;
        let out = if z.value() > 0.0 {
            z + ((-z).exp() + 1.0).ln()
        } else {
            (z.exp() + 1.0).ln()
        };
        out / beta
    }

    fn sqr(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        f64::powf(self, k)
    }
}

/// Small fixed-size vector helpers over any [`Scalar`].
pub mod vec3 {
    use super::Scalar;

    pub type V3<S> = [S; 3];

    #[inline]
    pub fn lift<S: Scalar>(v: [f64; 3]) -> V3<S> {
        [S::cst(v[0]), S::cst(v[1]), S::cst(v[2])]
    }

    #[inline]
    pub fn value<S: Scalar>(v: &V3<S>) -> [f64; 3] {
        [v[0].value(), v[1].value(), v[2].value()]
    }

    #[inline]
    pub fn add<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn sub<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn scale<S: Scalar>(a: V3<S>, k: S) -> V3<S> {
        [a[0] * k, a[1] * k, a[2] * k]
    }

    #[inline]
    pub fn dot<S: Scalar>(a: V3<S>, b: V3<S>) -> S {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn norm<S: Scalar>(a: V3<S>) -> S {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn normalize<S: Scalar>(a: V3<S>) -> V3<S> {
        let inv = norm(a).recip();
        scale(a, inv)
    }

    #[inline]
    pub fn cross<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    /// `m * v` for a constant row-major 3x3 matrix.
    #[inline]
    pub fn mat_mul<S: Scalar>(m: &[[f64; 3]; 3], v: V3<S>) -> V3<S> {
        [
            v[0] * m[0][0] + v[1] * m[0][1] + v[2] * m[0][2],
            v[0] * m[1][0] + v[1] * m[1][1] + v[2] * m[1][2],
            v[0] * m[2][0] + v[1] * m[2][1] + v[2] * m[2][2],
        ]
    }

    /// `mᵀ * v` for a constant row-major 3x3 matrix.
    #[inline]
    pub fn mat_tmul<S: Scalar>(m: &[[f64; 3]; 3], v: V3<S>) -> V3<S> {
        [
            v[0] * m[0][0] + v[1] * m[1][0] + v[2] * m[2][0],
            v[0] * m[0][1] + v[1] * m[1][1] + v[2] * m[2][1],
            v[0] * m[0][2] + v[1] * m[1][2] + v[2] * m[2][2],
        ]
    }
}
