use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Scalar;

/// Forward-mode dual number `re + eps * du` with `eps^2 = 0`.
///
/// The component type is itself a [`Scalar`], so `Dual<Dual<Dual<f64>>>`
/// carries three independent infinitesimals and yields third-order mixed
/// directional derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub du: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, du: S) -> Self {
        Dual { re, du }
    }

    pub fn constant(re: S) -> Self {
        Dual { re, du: S::zero() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.du + o.du)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.du - o.du)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.du + self.du * o.re)
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual::new(q, (self.du - q * o.du) / o.re)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.du)
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Dual::constant(S::from_f64(x))
    }

    #[inline]
    fn value(&self) -> f64 {
        self.re.value()
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.du)
    }

    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Dual::new(s, self.du / (s + s))
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual::new(self.re.scale(c), self.du.scale(c))
    }

    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.du)
    }

    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.re.sin() * self.du))
    }
}

/// Lift `z` into dual numbers with tangent `dir`.
pub fn seed<S: Scalar>(z: &[S], dir: &[f64]) -> Vec<Dual<S>> {
    z.iter()
        .zip(dir)
        .map(|(&x, &d)| Dual::new(x, S::from_f64(d)))
        .collect()
}

/// Lift `x` into dual numbers with zero tangent.
pub fn lift<S: Scalar>(x: &[S]) -> Vec<Dual<S>> {
    x.iter().map(|&x| Dual::constant(x)).collect()
}

pub fn tangents<S: Scalar>(x: &[Dual<S>]) -> Vec<S> {
    x.iter().map(|d| d.du).collect()
}

pub fn primals<S: Scalar>(x: &[Dual<S>]) -> Vec<S> {
    x.iter().map(|d| d.re).collect()
}
