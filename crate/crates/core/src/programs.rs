//! Closed-form programs: classical surfaces, linear maps, and the coordinate
//! changes used for invariance checks.

use crate::autodiff::{DenseMatrix, DiffProgram, Scalar};
use crate::error::{Error, Result};

/// `z -> A z`.
#[derive(Clone, Debug)]
pub struct LinearMap {
    a: DenseMatrix,
}

impl LinearMap {
    pub fn new(a: DenseMatrix) -> Self {
        LinearMap { a }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.a
    }
}

impl DiffProgram for LinearMap {
    fn input_dim(&self) -> usize {
        self.a.cols()
    }
    fn output_dim(&self) -> usize {
        self.a.rows()
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        (0..self.a.rows())
            .map(|r| {
                let mut acc = S::zero();
                for (c, &zc) in z.iter().enumerate() {
                    acc += zc.scale(self.a[(r, c)]);
                }
                acc
            })
            .collect()
    }
}

/// `(x, y) -> (x, y, x^2 + y^2)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Paraboloid;

impl DiffProgram for Paraboloid {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        3
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        vec![z[0], z[1], z[0] * z[0] + z[1] * z[1]]
    }
}

/// `(u, v) -> r (sin u cos v, sin u sin v, cos u)`.
#[derive(Clone, Copy, Debug)]
pub struct Sphere {
    pub radius: f64,
}

impl DiffProgram for Sphere {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        3
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        let (su, cu) = (z[0].sin(), z[0].cos());
        let (sv, cv) = (z[1].sin(), z[1].cos());
        vec![
            (su * cv).scale(self.radius),
            (su * sv).scale(self.radius),
            cu.scale(self.radius),
        ]
    }
}

/// `(t, h) -> (r cos t, r sin t, h)`.
#[derive(Clone, Copy, Debug)]
pub struct Cylinder {
    pub radius: f64,
}

impl DiffProgram for Cylinder {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        3
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        vec![z[0].cos().scale(self.radius), z[0].sin().scale(self.radius), z[1]]
    }
}

/// Monge patch `(x, y) -> (x, y, h(x, y))` of a scalar height program.
#[derive(Clone, Debug)]
pub struct GraphSurface<H> {
    pub height: H,
}

impl<H: DiffProgram> GraphSurface<H> {
    pub fn new(height: H) -> Result<Self> {
        if height.input_dim() != 2 || height.output_dim() != 1 {
            return Err(Error::InvalidSpec(format!(
                "graph height must map R^2 -> R, got R^{} -> R^{}",
                height.input_dim(),
                height.output_dim()
            )));
        }
        Ok(GraphSurface { height })
    }
}

impl<H: DiffProgram> DiffProgram for GraphSurface<H> {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        3
    }
    fn param_dim(&self) -> usize {
        self.height.param_dim()
    }
    fn eval<S: Scalar>(&self, z: &[S], theta: &[S]) -> Vec<S> {
        let h = self.height.eval(z, theta)[0];
        vec![z[0], z[1], h]
    }
}

/// Bivariate polynomial height `sum c_ij x^i y^j`, with coefficients keyed by
/// exponent pairs.
#[derive(Clone, Debug)]
pub struct PolyHeight {
    pub terms: Vec<(u32, u32, f64)>,
}

impl PolyHeight {
    /// `x^2 + y^2`.
    pub fn bowl() -> Self {
        PolyHeight {
            terms: vec![(2, 0, 1.0), (0, 2, 1.0)],
        }
    }
}

impl DiffProgram for PolyHeight {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        let mut acc = S::zero();
        for &(i, j, c) in &self.terms {
            acc += (z[0].powi(i) * z[1].powi(j)).scale(c);
        }
        vec![acc]
    }
}

/// `t -> (t, sin t)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SinCurve;

impl DiffProgram for SinCurve {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        vec![z[0], z[0].sin()]
    }
}

/// Scalar power `z -> z^p` on the first coordinate.
#[derive(Clone, Copy, Debug)]
pub struct Power {
    pub exponent: u32,
}

impl DiffProgram for Power {
    fn input_dim(&self) -> usize {
        1
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        vec![z[0].powi(self.exponent)]
    }
}

/// Elementwise unit-slope ELU.
#[derive(Clone, Copy, Debug)]
pub struct EluMap {
    pub dim: usize,
}

impl DiffProgram for EluMap {
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        z.iter().map(|&x| x.elu()).collect()
    }
}

/// `(z1, z2) -> (z1 + c z2^3, z2)`, invertible everywhere with inverse
/// `(z1 - c z2^3, z2)` obtained by negating `c`.
#[derive(Clone, Copy, Debug)]
pub struct ShearCubic {
    pub c: f64,
}

impl ShearCubic {
    pub fn inverse(&self) -> Self {
        ShearCubic { c: -self.c }
    }
}

impl DiffProgram for ShearCubic {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, z: &[S], _theta: &[S]) -> Vec<S> {
        vec![z[0] + (z[1] * z[1] * z[1]).scale(self.c), z[1]]
    }
}
