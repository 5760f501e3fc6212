//! Self-contained diagnostic suites: estimator statistics against exact
//! values, and invariance of the curvature measures under coordinate
//! changes.

use std::fmt::Write as _;

use rand::Rng as _;

use crate::autodiff::{DenseMatrix, DiffProgram};
use crate::error::{Error, Result};
use crate::estimators::{eec_mean, eic};
use crate::geometry::{exact_curvature, pullback_metric, reparametrize, tangent_projection};
use crate::oracle::mc_trace_reference;
use crate::programs::{Cylinder, LinearMap, Paraboloid, ShearCubic, Sphere};
use crate::rng;

/// Probe count for the statistical checks.
pub const CHECK_SAMPLES: usize = 10_000;
/// Seeds tried in the flat-decoder intrinsic check.
pub const FLAT_SEEDS: u64 = 100;
/// Absolute bound for the flat-decoder intrinsic check.
pub const FLAT_TOL: f64 = 1e-10;
/// Relative bound for the invariance checks.
pub const INVARIANCE_TOL: f64 = 1e-6;
/// Linear reparametrizations per surface.
pub const LINEAR_REPARAMETRIZATIONS: usize = 20;
/// Largest condition number of a random linear reparametrization.
pub const MAX_CONDITION: f64 = 100.0;

/// One line of a pass/fail table. `error` is compared against `tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRow {
    fn new(name: impl Into<String>, error: f64, tolerance: f64) -> Self {
        CheckRow {
            name: name.into(),
            error,
            tolerance,
            pass: error <= tolerance,
        }
    }
}

/// Fixed-width table with a final summary line.
pub fn render_table(title: &str, rows: &[CheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(5);
    let mut s = format!("{title}\n{:<width$}  {:>12}  {:>12}  result\n", "check", "error", "tolerance");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>12.3e}  {:>12.3e}  {}",
            r.name,
            r.error,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    let _ = writeln!(s, "{} checks, {} failed", rows.len(), failed);
    s
}

fn check_scale(scale: f64) -> Result<()> {
    if scale >= 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("tolerance scale must be a nonnegative number, got {scale}")))
    }
}

fn surfaces() -> [(&'static str, SurfaceProgram, [f64; 2]); 3] {
    [
        ("sphere", SurfaceProgram::Sphere(Sphere { radius: 1.0 }), [1.0, 0.4]),
        ("cylinder", SurfaceProgram::Cylinder(Cylinder { radius: 1.0 }), [0.3, 0.2]),
        ("paraboloid", SurfaceProgram::Paraboloid(Paraboloid), [0.0, 0.0]),
    ]
}

/// The analytic test surfaces behind one type.
#[derive(Clone, Copy, Debug)]
enum SurfaceProgram {
    Sphere(Sphere),
    Cylinder(Cylinder),
    Paraboloid(Paraboloid),
}

impl DiffProgram for SurfaceProgram {
    fn input_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        3
    }
    fn eval<S: crate::autodiff::Scalar>(&self, z: &[S], theta: &[S]) -> Vec<S> {
        match self {
            SurfaceProgram::Sphere(f) => f.eval(z, theta),
            SurfaceProgram::Cylinder(f) => f.eval(z, theta),
            SurfaceProgram::Paraboloid(f) => f.eval(z, theta),
        }
    }
}

/// Random symmetric positive definite `n x n` matrix `B^T B + I`.
fn random_spd(n: usize, r: &mut rng::Rng) -> DenseMatrix {
    let b = DenseMatrix::from_vec(n, n, rng::normal_vec(r, n * n));
    b.t_matmul(&b).add(&DenseMatrix::identity(n))
}

/// Trace convergence, extrinsic unbiasedness and the flat intrinsic check.
/// Every tolerance is multiplied by `scale`.
pub fn estimator_suite(seed: u64, scale: f64) -> Result<Vec<CheckRow>> {
    check_scale(scale)?;
    let mut rows = Vec::new();

    let a = random_spd(5, &mut rng::stream(seed, 100));
    let (mean, se) = mc_trace_reference(&a, CHECK_SAMPLES, seed)?;
    rows.push(CheckRow::new("trace random-spd-5", (mean - a.trace()).abs(), 3.0 * se * scale));

    for (name, f, z) in surfaces() {
        let g = pullback_metric(&f, &z, &[])?.metric;
        let (mean, se) = mc_trace_reference(&g, CHECK_SAMPLES, seed)?;
        rows.push(CheckRow::new(format!("trace metric {name}"), (mean - g.trace()).abs(), 3.0 * se * scale));
    }

    for (name, f, z) in surfaces() {
        let exact = exact_curvature(&f, &z, &[])?.extrinsic;
        let s = eec_mean(&f, &z, &[], CHECK_SAMPLES, seed)?;
        rows.push(CheckRow::new(
            format!("eec mean {name}"),
            (s.mean - exact).abs(),
            3.0 * s.standard_error * scale,
        ));
    }

    let mut r = rng::stream(seed, 101);
    let linear = LinearMap::new(DenseMatrix::from_vec(4, 2, rng::normal_vec(&mut r, 8)));
    let z: Vec<f64> = rng::normal_vec(&mut r, 2);
    rows.push(CheckRow::new("eic flat linear", flat_max(&linear, &z, seed)?, FLAT_TOL * scale));
    let cylinder = Cylinder { radius: 1.0 };
    rows.push(CheckRow::new("eic flat cylinder", flat_max(&cylinder, &[0.3, 0.2], seed)?, FLAT_TOL * scale));
    Ok(rows)
}

fn flat_max<P: DiffProgram>(f: &P, z: &[f64], seed: u64) -> Result<f64> {
    (0..FLAT_SEEDS).try_fold(0.0_f64, |acc, s| Ok(acc.max(eic(f, z, &[], &mut rng::stream(seed, 200 + s))?.abs())))
}

/// Rotation by `t`.
fn rotation(t: f64) -> DenseMatrix {
    let (s, c) = t.sin_cos();
    DenseMatrix::from_vec(2, 2, vec![c, -s, s, c])
}

/// `A = R(a) diag(s0, s1) R(b)` and its inverse, with condition number at
/// most `MAX_CONDITION`.
pub fn random_linear_change(r: &mut rng::Rng) -> (DenseMatrix, DenseMatrix) {
    use std::f64::consts::PI;
    let half = MAX_CONDITION.sqrt().ln();
    let s0 = r.random_range(-half..half).exp();
    let s1 = r.random_range(-half..half).exp() * if r.random_bool(0.5) { -1.0 } else { 1.0 };
    let (a, b) = (r.random_range(-PI..PI), r.random_range(-PI..PI));
    let d = DenseMatrix::from_vec(2, 2, vec![s0, 0.0, 0.0, s1]);
    let dinv = DenseMatrix::from_vec(2, 2, vec![1.0 / s0, 0.0, 0.0, 1.0 / s1]);
    let fwd = rotation(a).matmul(&d).matmul(&rotation(b));
    let inv = rotation(-b).matmul(&dinv).matmul(&rotation(-a));
    (fwd, inv)
}

/// `|a - b| / max(|a|, |b|, 1)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn matrix_relative_error(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let d = a.sub(b);
    let n = |m: &DenseMatrix| m.frobenius_dot(m).sqrt();
    n(&d) / n(a).max(n(b)).max(1.0)
}

/// Largest relative change of intrinsic measure, extrinsic measure and
/// tangent projector between `f` at `z` and `f o h^-1` at `h(z)`.
fn invariance_error<F, H>(f: F, z: &[f64], h_inverse: H, hz: &[f64]) -> Result<f64>
where
    F: DiffProgram + Clone,
    H: DiffProgram,
{
    let a = exact_curvature(&f, z, &[])?;
    let ta = tangent_projection(&f, z, &[])?;
    let g = reparametrize(f, h_inverse)?;
    let b = exact_curvature(&g, hz, &[])?;
    let tb = tangent_projection(&g, hz, &[])?;
    Ok(relative_error(a.intrinsic, b.intrinsic)
        .max(relative_error(a.extrinsic, b.extrinsic))
        .max(matrix_relative_error(&ta, &tb)))
}

/// Random linear, one fixed nonlinear and the identity reparametrization on
/// the sphere and the paraboloid. The identity rows demand exact equality;
/// every other tolerance is `INVARIANCE_TOL * scale`.
pub fn invariance_suite(seed: u64, scale: f64) -> Result<Vec<CheckRow>> {
    check_scale(scale)?;
    let mut rows = Vec::new();
    let cases = [
        ("sphere", SurfaceProgram::Sphere(Sphere { radius: 1.0 }), [1.0, 0.4]),
        ("paraboloid", SurfaceProgram::Paraboloid(Paraboloid), [0.3, -0.2]),
    ];
    for (k, (name, f, z)) in cases.into_iter().enumerate() {
        let ident = LinearMap::new(DenseMatrix::identity(2));
        rows.push(CheckRow::new(format!("{name} identity"), invariance_error(f, &z, ident, &z)?, 0.0));
        let mut r = rng::stream(seed, 300 + k as u64);
        for i in 0..LINEAR_REPARAMETRIZATIONS {
            let (a, ainv) = random_linear_change(&mut r);
            let hz = a.matvec(&z);
            let e = invariance_error(f, &z, LinearMap::new(ainv), &hz)?;
            rows.push(CheckRow::new(format!("{name} linear {i}"), e, INVARIANCE_TOL * scale));
        }
        let h = ShearCubic { c: 0.1 };
        let hz = h.eval(&z, &[]);
        let e = invariance_error(f, &z, h.inverse(), &hz)?;
        rows.push(CheckRow::new(format!("{name} shear-cubic"), e, INVARIANCE_TOL * scale));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_changes_are_inverse_and_conditioned() {
        let mut r = rng::stream(3, 0);
        for _ in 0..50 {
            let (a, ainv) = random_linear_change(&mut r);
            let p = a.matmul(&ainv);
            assert!(p.sub(&DenseMatrix::identity(2)).max_abs() < 1e-12);
            let g = a.t_matmul(&a);
            let (t, d) = (g.trace(), g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)]);
            let disc = (t * t / 4.0 - d).max(0.0).sqrt();
            let cond = ((t / 2.0 + disc) / (t / 2.0 - disc)).sqrt();
            assert!(cond <= MAX_CONDITION * (1.0 + 1e-9), "{cond}");
        }
    }

    #[test]
    fn zero_scale_fails_statistical_rows() {
        let rows = estimator_suite(1, 0.0).unwrap();
        assert!(rows.iter().any(|r| !r.pass));
        assert!(estimator_suite(1, -1.0).is_err());
    }

    #[test]
    fn table_counts_failures() {
        let rows = [CheckRow::new("a", 0.0, 1.0), CheckRow::new("b", 2.0, 1.0)];
        let t = render_table("t", &rows);
        assert!(t.ends_with("2 checks, 1 failed\n"));
        assert!(t.contains("FAIL"));
    }
}
