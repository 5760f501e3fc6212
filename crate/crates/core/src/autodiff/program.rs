use super::dual::{lift, seed, tangents};
use super::tape::{vector_gradient, Var};
use super::{DenseMatrix, Dual, Scalar};
use crate::error::{check_dim, Error, Result};

/// A pure differentiable map `(z; theta) -> y`.
///
/// Implementations write their body once against [`Scalar`]; the engine then
/// evaluates it with plain floats, nested dual numbers, or tape variables.
/// Evaluation must be deterministic and free of side effects.
pub trait DiffProgram {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn param_dim(&self) -> usize {
        0
    }

    /// Evaluate the body. Callers guarantee `z.len() == input_dim()` and
    /// `theta.len() == param_dim()`; use [`evaluate`] for checked calls.
    fn eval<S: Scalar>(&self, z: &[S], theta: &[S]) -> Vec<S>;
}

impl<P: DiffProgram> DiffProgram for &P {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn eval<S: Scalar>(&self, z: &[S], theta: &[S]) -> Vec<S> {
        (**self).eval(z, theta)
    }
}

pub(crate) fn check_args<P: DiffProgram>(f: &P, z: usize, theta: usize) -> Result<()> {
    check_dim("program input", f.input_dim(), z)?;
    check_dim("program parameters", f.param_dim(), theta)
}

/// Checked evaluation of `f(z; theta)`.
pub fn evaluate<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_args(f, z.len(), theta.len())?;
    Ok(f.eval(z, theta))
}

/// The program `z -> J_f(z) v`: the directional derivative of `f` along a
/// fixed latent direction. It is again a [`DiffProgram`] with the same
/// dimensions, so directional derivatives nest to any depth.
#[derive(Clone, Debug)]
pub struct Jvp<P> {
    inner: P,
    dir: Vec<f64>,
}

impl<P: DiffProgram> Jvp<P> {
    pub fn direction(&self) -> &[f64] {
        &self.dir
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: DiffProgram> DiffProgram for Jvp<P> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn eval<S: Scalar>(&self, z: &[S], theta: &[S]) -> Vec<S> {
        let zs = seed(z, &self.dir);
        let ts = lift(theta);
        tangents(&self.inner.eval(&zs, &ts))
    }
}

/// Directional-derivative operator.
pub fn jvp<P: DiffProgram>(f: P, v: &[f64]) -> Result<Jvp<P>> {
    check_dim("jvp direction", f.input_dim(), v.len())?;
    Ok(Jvp {
        inner: f,
        dir: v.to_vec(),
    })
}

/// Adjoint-derivative operator: returns `(u^T df/dz, u^T df/dtheta)`.
pub fn vjp<P: DiffProgram>(
    f: &P,
    z: &[f64],
    theta: &[f64],
    u: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_args(f, z.len(), theta.len())?;
    check_dim("vjp cotangent", f.output_dim(), u.len())?;
    let m = z.len();
    let mut x = z.to_vec();
    x.extend_from_slice(theta);
    let (_, mut g) = vector_gradient(&x, |v: &[Var]| f.eval(&v[..m], &v[m..]), u);
    let gt = g.split_off(m);
    Ok((g, gt))
}

/// Gradient of a scalar program with respect to its parameters only.
pub fn param_gradient<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_args(f, z.len(), theta.len())?;
    if f.output_dim() != 1 {
        return Err(Error::dim("scalar program output", 1, f.output_dim()));
    }
    let zc: Vec<Var> = z.iter().map(|&x| Var::constant(x)).collect();
    let (v, g) = vector_gradient(theta, |t: &[Var]| f.eval(&zc, t), &[1.0]);
    Ok((v[0], g))
}

/// `J_f(z)`, assembled column by column from `input_dim` directional derivatives.
pub fn jacobian<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<DenseMatrix> {
    check_args(f, z.len(), theta.len())?;
    Ok(jacobian_generic(f, z, theta))
}

pub(crate) fn jacobian_generic<P: DiffProgram, S: Scalar>(
    f: &P,
    z: &[S],
    theta: &[S],
) -> super::Matrix<S> {
    let m = z.len();
    let ts = lift(theta);
    let cols: Vec<Vec<S>> = (0..m)
        .map(|i| {
            let zs: Vec<Dual<S>> = z
                .iter()
                .enumerate()
                .map(|(k, &x)| Dual::new(x, if k == i { S::one() } else { S::zero() }))
                .collect();
            tangents(&f.eval(&zs, &ts))
        })
        .collect();
    super::Matrix::from_columns(&cols)
}

/// `f ∘ g`: evaluates `g(z; theta_g)` and feeds the result to `f`.
/// Parameters are laid out as `[theta_f, theta_g]`.
#[derive(Clone, Debug)]
pub struct Compose<F, G> {
    pub outer: F,
    pub inner: G,
}

impl<F: DiffProgram, G: DiffProgram> Compose<F, G> {
    pub fn new(outer: F, inner: G) -> Result<Self> {
        check_dim("composition inner output", outer.input_dim(), inner.output_dim())?;
        Ok(Compose { outer, inner })
    }
}

impl<F: DiffProgram, G: DiffProgram> DiffProgram for Compose<F, G> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn output_dim(&self) -> usize {
        self.outer.output_dim()
    }
    fn param_dim(&self) -> usize {
        self.outer.param_dim() + self.inner.param_dim()
    }
    fn eval<S: Scalar>(&self, z: &[S], theta: &[S]) -> Vec<S> {
        let (tf, tg) = theta.split_at(self.outer.param_dim());
        let y = self.inner.eval(z, tg);
        self.outer.eval(&y, tf)
    }
}
