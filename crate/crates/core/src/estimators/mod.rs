//! Stochastic curvature estimators built from Jacobian-vector products.
//!
//! [`eic`] and [`eec`] draw fresh Gaussian probes and evaluate the
//! single-sample estimates by nesting forward-mode directional derivatives
//! of the decoder. The `*_generic` variants run over any [`Scalar`], which
//! is how parameter gradients are taken. Batch and diagnostic routines
//! compute one jet per point and reuse it across probes through the
//! closed-form [`heads`].

pub mod heads;

use crate::autodiff::{check_args, dot, jacobian_generic, lift, DiffProgram, Dual, Matrix, Scalar, SpdFactor, Var};
use crate::autodiff::tape::vector_gradient;
use crate::error::{Error, Result};
use crate::geometry::LocalJet;
use crate::oracle::mean_and_standard_error;
use crate::rng::{self, Rng};

pub use heads::{eec_from_jet, eic_from_jet, iso_from_jet};

/// Gaussian probe pair. For the intrinsic estimate both live in the latent
/// space; for the extrinsic estimate `v` is ambient and `w` latent.
#[derive(Clone, Debug, PartialEq)]
pub struct Probes {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl Probes {
    pub fn intrinsic(latent: usize, rng: &mut Rng) -> Self {
        let v = rng::normal_vec(rng, latent);
        let w = rng::normal_vec(rng, latent);
        Probes { v, w }
    }

    pub fn extrinsic(ambient: usize, latent: usize, rng: &mut Rng) -> Self {
        let v = rng::normal_vec(rng, ambient);
        let w = rng::normal_vec(rng, latent);
        Probes { v, w }
    }
}

/// One recorded estimate with its probes.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSample {
    pub probes: Probes,
    pub seed: u64,
    pub value: f64,
}

/// An extrinsic estimate, clamped at zero when the single-sample value is
/// negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub clamped: bool,
}

impl Estimate {
    fn from_raw(raw: f64) -> Self {
        if raw < 0.0 {
            Estimate {
                value: 0.0,
                clamped: true,
            }
        } else {
            Estimate {
                value: raw,
                clamped: false,
            }
        }
    }
}

fn consts<S: Scalar>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&a| S::from_f64(a)).collect()
}

fn metric_generic<P: DiffProgram, S: Scalar>(f: &P, z: &[S], theta: &[S]) -> Matrix<S> {
    let j = jacobian_generic(f, z, theta);
    j.t_matmul(&j)
}

/// `G(z)` and `(d.∇)(G)(z)` by one extra level of forward mode.
fn directional_metric<P: DiffProgram, S: Scalar>(
    f: &P,
    z: &[S],
    theta: &[S],
    dir: &[S],
) -> (Matrix<S>, Matrix<S>) {
    let zd: Vec<Dual<S>> = z.iter().zip(dir).map(|(&x, &d)| Dual::new(x, d)).collect();
    let g = metric_generic(f, &zd, &lift(theta));
    (g.map(|x| x.re), g.map(|x| x.du))
}

/// `w^T G^-2 x` as `(G^-1 w) . (G^-1 x)`.
fn inv2_form<S: Scalar>(fac: &SpdFactor<S>, w: &[S], x: &[S]) -> S {
    dot(&fac.solve(w), &fac.solve(x))
}

/// Single-sample intrinsic estimate for the given probes over any scalar type.
pub fn eic_generic<P: DiffProgram, S: Scalar>(f: &P, z: &[S], theta: &[S], v: &[f64], w: &[f64]) -> Result<S> {
    check_args(f, z.len(), theta.len())?;
    let m = z.len();
    crate::error::check_dim("intrinsic probe v", m, v.len())?;
    crate::error::check_dim("intrinsic probe w", m, w.len())?;
    if m == 1 {
        return Ok(S::zero());
    }
    let (vs, ws) = (consts::<S>(v), consts::<S>(w));

    // ½ (w.∇)(w^T G^-2 (v.∇)(Gv))
    let t1 = {
        let zw: Vec<Dual<S>> = z.iter().zip(&ws).map(|(&x, &d)| Dual::new(x, d)).collect();
        let (g, dvg) = directional_metric(f, &zw, &lift(theta), &lift(&vs));
        let fac = SpdFactor::new(&g)?;
        inv2_form(&fac, &lift(&ws), &dvg.matvec(&lift(&vs))).du
    };
    // ½ (v.∇)(w^T G^-2 (v.∇)(Gw))
    let t2 = {
        let zv: Vec<Dual<S>> = z.iter().zip(&vs).map(|(&x, &d)| Dual::new(x, d)).collect();
        let (g, dvg) = directional_metric(f, &zv, &lift(theta), &lift(&vs));
        let fac = SpdFactor::new(&g)?;
        inv2_form(&fac, &lift(&ws), &dvg.matvec(&lift(&ws))).du
    };

    let (g, dvg) = directional_metric(f, z, theta, &vs);
    let (_, dwg) = directional_metric(f, z, theta, &ws);
    let fac = SpdFactor::new(&g)?;
    let a = fac.solve(&ws);
    let b = fac.solve(&a);
    let c = fac.solve(&b);
    let gvw = dvg.matvec(&ws);
    let gwv = dwg.matvec(&vs);
    let t3 = dot(&c, &dvg.matvec(&gvw));
    let t4 = dot(&b, &dvg.matvec(&fac.solve(&gvw)));
    let t5 = dot(&b, &dvg.matvec(&fac.solve(&gwv)));
    let t6 = dot(&a, &dvg.matvec(&fac.solve(&fac.solve(&gwv))));

    let s = t1.scale(0.5) - t2.scale(0.5) + t3.scale(0.25) - t4.scale(0.25) - t5.scale(0.25)
        + t6.scale(0.25);
    Ok(s * s)
}

/// `(d.∇)(T v)` where `T` is the tangent projection and `d` may depend on
/// the scalars being differentiated.
fn projected_derivative<P: DiffProgram, S: Scalar>(f: &P, z: &[S], theta: &[S], dir: &[S], v: &[S]) -> Result<Vec<S>> {
    let zd: Vec<Dual<S>> = z.iter().zip(dir).map(|(&x, &d)| Dual::new(x, d)).collect();
    let j = jacobian_generic(f, &zd, &lift(theta));
    let fac = SpdFactor::new(&j.t_matmul(&j))?;
    let tv = j.matvec(&fac.solve(&j.t_matvec(&lift(v))));
    Ok(tv.iter().map(|x| x.du).collect())
}

/// Unclamped single-sample extrinsic estimate over any scalar type.
pub fn eec_generic<P: DiffProgram, S: Scalar>(f: &P, z: &[S], theta: &[S], v: &[f64], w: &[f64]) -> Result<S> {
    check_args(f, z.len(), theta.len())?;
    crate::error::check_dim("extrinsic probe v", f.output_dim(), v.len())?;
    crate::error::check_dim("extrinsic probe w", z.len(), w.len())?;
    let (vs, ws) = (consts::<S>(v), consts::<S>(w));
    let g = metric_generic(f, z, theta);
    let wt = SpdFactor::new(&g)?.solve(&ws);
    let a = projected_derivative(f, z, theta, &ws, &vs)?;
    let b = projected_derivative(f, z, theta, &wt, &vs)?;
    Ok(dot(&a, &b).scale(0.5))
}

/// Intrinsic estimate with fresh probes `v, w ~ N(0, I_m)`.
pub fn eic<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], rng: &mut Rng) -> Result<f64> {
    let p = Probes::intrinsic(z.len(), rng);
    eic_generic(f, z, theta, &p.v, &p.w)
}

/// Extrinsic estimate with fresh probes `v ~ N(0, I_D)`, `w ~ N(0, I_m)`.
pub fn eec<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], rng: &mut Rng) -> Result<Estimate> {
    let p = Probes::extrinsic(f.output_dim(), z.len(), rng);
    Ok(Estimate::from_raw(eec_generic(f, z, theta, &p.v, &p.w)?))
}

/// Intrinsic estimate and its gradient over the parameters.
pub fn eic_param_gradient<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], probes: &Probes) -> Result<(f64, Vec<f64>)> {
    param_gradient_of(theta, |t| {
        let zs: Vec<Var> = z.iter().map(|&x| Var::constant(x)).collect();
        eic_generic(f, &zs, t, &probes.v, &probes.w)
    })
}

/// Unclamped extrinsic estimate and its gradient over the parameters.
pub fn eec_param_gradient<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], probes: &Probes) -> Result<(f64, Vec<f64>)> {
    param_gradient_of(theta, |t| {
        let zs: Vec<Var> = z.iter().map(|&x| Var::constant(x)).collect();
        eec_generic(f, &zs, t, &probes.v, &probes.w)
    })
}

fn param_gradient_of(theta: &[f64], body: impl FnOnce(&[Var]) -> Result<Var>) -> Result<(f64, Vec<f64>)> {
    let mut err = None;
    let (vals, grad) = vector_gradient(
        theta,
        |t| match body(t) {
            Ok(v) => vec![v],
            Err(e) => {
                err = Some(e);
                vec![Var::constant(f64::NAN)]
            }
        },
        &[1.0],
    );
    match err {
        Some(e) => Err(e),
        None => Ok((vals[0], grad)),
    }
}

/// Per-point result of a batch estimate. Singular points carry `NaN`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub singular: bool,
    pub clamped: bool,
}

impl PointEstimate {
    fn singular() -> Self {
        PointEstimate {
            value: f64::NAN,
            singular: true,
            clamped: false,
        }
    }
}

fn batch<P: DiffProgram>(
    f: &P,
    points: &[Vec<f64>],
    theta: &[f64],
    seed: u64,
    one: impl Fn(&P, &[f64], &mut Rng) -> Result<Estimate>,
) -> Result<Vec<PointEstimate>> {
    points
        .iter()
        .enumerate()
        .map(|(i, z)| {
            check_args(f, z.len(), theta.len())?;
            let mut r = rng::stream(seed, i as u64);
            match one(f, z, &mut r) {
                Ok(e) => Ok(PointEstimate {
                    value: e.value,
                    singular: false,
                    clamped: e.clamped,
                }),
                Err(e) if e.is_numerical() => Ok(PointEstimate::singular()),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Intrinsic estimates at every point, point `i` drawing its probes from
/// stream `(seed, i)`.
pub fn eic_batch<P: DiffProgram>(f: &P, points: &[Vec<f64>], theta: &[f64], seed: u64) -> Result<Vec<PointEstimate>> {
    batch(f, points, theta, seed, |f, z, r| {
        Ok(Estimate {
            value: eic(f, z, theta, r)?,
            clamped: false,
        })
    })
}

/// Extrinsic estimates at every point, point `i` drawing its probes from
/// stream `(seed, i)`.
pub fn eec_batch<P: DiffProgram>(f: &P, points: &[Vec<f64>], theta: &[f64], seed: u64) -> Result<Vec<PointEstimate>> {
    batch(f, points, theta, seed, |f, z, r| eec(f, z, theta, r))
}

/// Mean, standard error and clamp count of repeated estimates at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
    pub clamped: usize,
}

/// Mean of `n` intrinsic estimates at `z` with probes from stream `(seed, 0)`.
/// The jet is computed once and reused for every probe pair.
pub fn eic_mean<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], n: usize, seed: u64) -> Result<SampleSummary> {
    let jet = LocalJet::from_program(f, z, theta, if z.len() == 1 { 1 } else { 3 })?;
    eic_mean_from_jet(&jet, n, &mut rng::stream(seed, 0))
}

/// Mean of `n` clamped extrinsic estimates at `z` with probes from stream
/// `(seed, 0)`.
pub fn eec_mean<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], n: usize, seed: u64) -> Result<SampleSummary> {
    let jet = LocalJet::from_program(f, z, theta, 2)?;
    eec_mean_from_jet(&jet, n, &mut rng::stream(seed, 0))
}

/// Mean of `n` intrinsic estimates from a third-order jet (any order when
/// the latent dimension is 1).
pub fn eic_mean_from_jet(jet: &LocalJet, n: usize, rng: &mut Rng) -> Result<SampleSummary> {
    let view = jet.view();
    let m = view.latent_dim();
    let vals = (0..n)
        .map(|_| {
            let p = Probes::intrinsic(m, rng);
            if m == 1 {
                Ok(0.0)
            } else {
                eic_from_jet(&view, &p.v, &p.w)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    summarize(&vals, 0)
}

/// Mean of `n` clamped extrinsic estimates from a jet of order at least 2.
pub fn eec_mean_from_jet(jet: &LocalJet, n: usize, rng: &mut Rng) -> Result<SampleSummary> {
    let view = jet.view();
    let mut clamped = 0;
    let vals = (0..n)
        .map(|_| {
            let p = Probes::extrinsic(view.ambient_dim(), view.latent_dim(), rng);
            let e = Estimate::from_raw(eec_from_jet(&view, &p.v, &p.w)?);
            clamped += e.clamped as usize;
            Ok(e.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    summarize(&vals, clamped)
}

fn summarize(vals: &[f64], clamped: usize) -> Result<SampleSummary> {
    if vals.is_empty() {
        return Err(Error::InvalidSpec("at least one sample is required".into()));
    }
    let (mean, standard_error) = mean_and_standard_error(vals);
    Ok(SampleSummary {
        mean,
        standard_error,
        samples: vals.len(),
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::DenseMatrix;
    use crate::programs::{Cylinder, LinearMap, Paraboloid, Sphere};

    #[test]
    fn eic_vanishes_on_constant_metrics() {
        let a = LinearMap::new(DenseMatrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0]));
        let cyl = Cylinder { radius: 1.0 };
        for s in 0..20 {
            let mut r = rng::stream(s, 0);
            assert_eq!(eic(&a, &[0.3, 0.1], &[], &mut r).unwrap(), 0.0);
            let e = eic(&cyl, &[0.3, 0.1], &[], &mut r).unwrap();
            assert!(e.abs() <= 1e-10, "{e}");
        }
    }

    #[test]
    fn eec_vanishes_on_linear_maps() {
        let a = LinearMap::new(DenseMatrix::from_vec(3, 2, vec![1.0, 0.5, 0.0, 1.0, 2.0, 0.0]));
        let mut r = rng::stream(4, 0);
        for _ in 0..10 {
            assert_eq!(eec(&a, &[0.3, 0.1], &[], &mut r).unwrap().value, 0.0);
        }
    }

    #[test]
    fn heads_match_nested_jvp() {
        let f = Sphere { radius: 1.3 };
        let z = [0.9, 0.4];
        let jet = LocalJet::from_program(&f, &z, &[], 3).unwrap();
        let mut r = rng::stream(11, 0);
        for _ in 0..5 {
            let p = Probes::intrinsic(2, &mut r);
            let lit: f64 = eic_generic(&f, &z, &[], &p.v, &p.w).unwrap();
            let head = eic_from_jet(&jet.view(), &p.v, &p.w).unwrap();
            assert!((lit - head).abs() <= 1e-10 * (1.0 + lit.abs()), "{lit} {head}");
            let p = Probes::extrinsic(3, 2, &mut r);
            let lit: f64 = eec_generic(&f, &z, &[], &p.v, &p.w).unwrap();
            let head = eec_from_jet(&jet.view(), &p.v, &p.w).unwrap();
            assert!((lit - head).abs() <= 1e-10 * (1.0 + lit.abs()), "{lit} {head}");
        }
    }

    #[test]
    fn eec_mean_recovers_extrinsic_curvature() {
        let s = eec_mean(&Cylinder { radius: 1.0 }, &[0.2, 0.1], &[], 10_000, 3).unwrap();
        assert!((s.mean - 1.0).abs() < 3.0 * s.standard_error, "{s:?}");
        let s = eec_mean(&Paraboloid, &[0.0, 0.0], &[], 10_000, 5).unwrap();
        assert!((s.mean - 8.0).abs() < 3.0 * s.standard_error, "{s:?}");
    }

    #[test]
    fn batch_is_deterministic_and_flags_singular_points() {
        let cyl = Cylinder { radius: 1.0 };
        let pts = vec![vec![0.1, 0.2], vec![-0.4, 0.3]];
        let a = eec_batch(&cyl, &pts, &[], 9).unwrap();
        let b = eec_batch(&cyl, &pts, &[], 9).unwrap();
        assert_eq!(a, b);
        let zero = LinearMap::new(DenseMatrix::zeros(3, 2));
        let out = eec_batch(&zero, &pts, &[], 9).unwrap();
        assert!(out.iter().all(|p| p.singular && p.value.is_nan()));
    }

    #[test]
    fn curves_have_zero_intrinsic_estimate() {
        let mut r = rng::stream(1, 0);
        let f = crate::programs::SinCurve;
        assert_eq!(eic(&f, &[0.7], &[], &mut r).unwrap(), 0.0);
    }
}
