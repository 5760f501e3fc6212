use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Numeric type every differentiable program is written against.
///
/// `f64` is the plain evaluation type. [`Dual`](super::Dual) adds one level of
/// forward-mode differentiation and nests freely, and [`Var`](super::Var)
/// records operations on the reverse-mode tape. A program written once
/// against `Scalar` can therefore be evaluated, differentiated in any number
/// of directions, and then differentiated again with respect to its
/// parameters.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Lift a constant.
    fn from_f64(x: f64) -> Self;

    /// The primal value with every derivative component dropped.
    fn value(&self) -> f64;

    fn exp(self) -> Self;

    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    /// Multiply by a constant.
    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }

    fn powi(self, n: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..n {
            acc *= self;
        }
        acc
    }

    /// Exponential linear unit with unit slope.
    ///
    /// The branch is chosen on the primal value; a pre-activation of exactly
    /// zero takes the `x <= 0` branch, so its derivatives of order two and
    /// higher are `exp(0) = 1`.
    fn elu(self) -> Self {
        if self.value() > 0.0 {
            self
        } else {
            self.exp() - Self::one()
        }
    }

    fn sin(self) -> Self;

    fn cos(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
}

/// ELU and its first four derivatives at `x`, on the same branch convention
/// as [`Scalar::elu`].
pub fn elu_derivatives(x: f64) -> [f64; 5] {
    if x > 0.0 {
        [x, 1.0, 0.0, 0.0, 0.0]
    } else {
        let e = x.exp();
        [e - 1.0, e, e, e, e]
    }
}
