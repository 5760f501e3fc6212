//! Estimators evaluated from precomputed jets.
//!
//! Each head is a closed-form function of the jet coefficients and the
//! probes, generic over [`Scalar`] so a reverse pass over the coefficients
//! yields their adjoints. Values agree with the nested-jvp estimators in the
//! parent module up to rounding.

use crate::autodiff::{dot, Matrix, Scalar, SpdFactor};
use crate::error::{Error, Result};
use crate::geometry::JetView;

fn consts<S: Scalar>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&a| S::from_f64(a)).collect()
}

/// `∂_u G = (∂_u J)^T J + J^T ∂_u J`.
fn metric_derivative<S: Scalar>(j: &Matrix<S>, du_j: &Matrix<S>) -> Matrix<S> {
    du_j.t_matmul(j).add(&j.t_matmul(du_j))
}

/// Six-term intrinsic estimate from a third-order jet.
pub fn eic_from_jet<S: Scalar>(jet: &JetView<'_, S>, v: &[f64], w: &[f64]) -> Result<S> {
    let m = jet.latent_dim();
    check_probe("intrinsic probe v", m, v.len())?;
    check_probe("intrinsic probe w", m, w.len())?;
    if m == 1 {
        return Ok(S::zero());
    }
    if jet.order() < 3 {
        return Err(Error::InvalidSpec("intrinsic estimate needs a third-order jet".into()));
    }
    let (vs, ws) = (consts::<S>(v), consts::<S>(w));
    let j = jet.jacobian();
    let g = j.t_matmul(&j);
    let fac = SpdFactor::new(&g)?;
    let jv = jet.jacobian_derivative(&vs);
    let jw = jet.jacobian_derivative(&ws);
    let dvg = metric_derivative(&j, &jv);
    let dwg = metric_derivative(&j, &jw);
    let jvw = jet.jacobian_second_derivative(&ws, &vs);
    let jvv = jet.jacobian_second_derivative(&vs, &vs);
    let ddg_wv = metric_derivative(&j, &jvw).add(&jw.t_matmul(&jv)).add(&jv.t_matmul(&jw));
    let ddg_vv = metric_derivative(&j, &jvv).add(&jv.t_matmul(&jv).scale(2.0));

    let a = fac.solve(&ws);
    let b = fac.solve(&a);
    let c = fac.solve(&b);
    let inv2 = |x: &[S]| fac.solve(&fac.solve(x));

    // (v.∇)(Gv), (v.∇)(Gw), (w.∇)(Gv)
    let x_vv = dvg.matvec(&vs);
    let x_vw = dvg.matvec(&ws);
    let x_wv = dwg.matvec(&vs);

    // ∂_w (w^T G^-2 x) with x = (v.∇)(Gv)
    let t1 = dot(&b, &ddg_wv.matvec(&vs))
        - dot(&a, &dwg.matvec(&inv2(&x_vv)))
        - dot(&b, &dwg.matvec(&fac.solve(&x_vv)));
    // ∂_v (w^T G^-2 x) with x = (v.∇)(Gw)
    let t2 = dot(&b, &ddg_vv.matvec(&ws))
        - dot(&a, &dvg.matvec(&inv2(&x_vw)))
        - dot(&b, &dvg.matvec(&fac.solve(&x_vw)));
    let t3 = dot(&c, &dvg.matvec(&x_vw));
    let t4 = dot(&b, &dvg.matvec(&fac.solve(&x_vw)));
    let t5 = dot(&b, &dvg.matvec(&fac.solve(&x_wv)));
    let t6 = dot(&a, &dvg.matvec(&inv2(&x_wv)));

    let s = t1.scale(0.5) - t2.scale(0.5) + t3.scale(0.25) - t4.scale(0.25) - t5.scale(0.25)
        + t6.scale(0.25);
    Ok(s * s)
}

/// Unclamped extrinsic estimate `½ ((w.∇)(Tv))^T (w̃.∇)(Tv)` from a jet of
/// order at least two.
pub fn eec_from_jet<S: Scalar>(jet: &JetView<'_, S>, v: &[f64], w: &[f64]) -> Result<S> {
    let m = jet.latent_dim();
    check_probe("extrinsic probe v", jet.ambient_dim(), v.len())?;
    check_probe("extrinsic probe w", m, w.len())?;
    if jet.order() < 2 {
        return Err(Error::InvalidSpec("extrinsic estimate needs a second-order jet".into()));
    }
    let (vs, ws) = (consts::<S>(v), consts::<S>(w));
    let j = jet.jacobian();
    let g = j.t_matmul(&j);
    let fac = SpdFactor::new(&g)?;
    let wt = fac.solve(&ws);
    let y = fac.solve(&j.t_matvec(&vs));
    // (u.∇)(Tv) = ∂_u J y + J G^-1 (∂_u J^T v - ∂_u G y)
    let dtv = |u: &[S]| -> Vec<S> {
        let ju = jet.jacobian_derivative(u);
        let dg = metric_derivative(&j, &ju);
        let r: Vec<S> = ju
            .t_matvec(&vs)
            .iter()
            .zip(dg.matvec(&y))
            .map(|(&p, q)| p - q)
            .collect();
        let back = j.matvec(&fac.solve(&r));
        ju.matvec(&y).iter().zip(back).map(|(&p, q)| p + q).collect()
    };
    Ok(dot(&dtv(&ws), &dtv(&wt)).scale(0.5))
}

/// Scaled-isometry deviation `||G / (tr G / m) - I||_F^2` from a jet of
/// order at least one.
pub fn iso_from_jet<S: Scalar>(jet: &JetView<'_, S>) -> Result<S> {
    if jet.order() < 1 {
        return Err(Error::InvalidSpec("isometry penalty needs a first-order jet".into()));
    }
    let m = jet.latent_dim();
    let j = jet.jacobian();
    let g = j.t_matmul(&j);
    let tr = g.trace();
    let tv = tr.value();
    if !(tv.is_finite() && tv > 0.0) {
        return Err(Error::SingularMetric(format!("metric trace is {tv}")));
    }
    let c = tr.scale(1.0 / m as f64);
    let mut acc = S::zero();
    for r in 0..m {
        for k in 0..m {
            let mut e = g[(r, k)] / c;
            if r == k {
                e -= S::one();
            }
            acc += e * e;
        }
    }
    Ok(acc)
}

fn check_probe(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::dim(what, expected, got))
    } else {
        Ok(())
    }
}
