//! Independent reference values: central finite differences, closed-form
//! curvature of classical surfaces, the shape-operator route to extrinsic
//! curvature, and Monte Carlo trace estimation.
//!
//! Nothing here calls the exact geometry code; finite-difference routines
//! only evaluate the program at plain `f64` points.

use crate::autodiff::{check_args, evaluate, DenseMatrix, DiffProgram, SpdFactor};
use crate::error::{Error, Result};
use crate::programs::{Cylinder, GraphSurface, PolyHeight, Sphere};
use crate::rng;

/// Fixed central-difference steps for orders 1, 2 and 3.
pub const FD_STEPS: [f64; 3] = [1e-4, 1e-3, 5e-3];

fn shifted<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], v: &[f64], t: f64) -> Vec<f64> {
    let zs: Vec<f64> = z.iter().zip(v).map(|(a, b)| a + t * b).collect();
    f.eval(&zs, theta)
}

/// Central finite-difference directional derivative of order 1, 2 or 3
/// along `v`, using the step in [`FD_STEPS`].
pub fn fd_directional<P: DiffProgram>(
    f: &P,
    z: &[f64],
    theta: &[f64],
    v: &[f64],
    order: usize,
) -> Result<Vec<f64>> {
    check_args(f, z.len(), theta.len())?;
    if v.len() != z.len() {
        return Err(Error::dim("difference direction", z.len(), v.len()));
    }
    let at = |t: f64| shifted(f, z, theta, v, t);
    let out = match order {
        1 => {
            let h = FD_STEPS[0];
            let (p, m) = (at(h), at(-h));
            p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
        }
        2 => {
            let h = FD_STEPS[1];
            let (p, c, m) = (at(h), at(0.0), at(-h));
            (0..c.len()).map(|i| (p[i] - 2.0 * c[i] + m[i]) / (h * h)).collect()
        }
        3 => {
            let h = FD_STEPS[2];
            let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            (0..p1.len())
                .map(|i| (p2[i] - 2.0 * p1[i] + 2.0 * m1[i] - m2[i]) / (2.0 * h * h * h))
                .collect()
        }
        _ => {
            return Err(Error::InvalidSpec(format!(
                "finite differences support orders 1..=3, got {order}"
            )))
        }
    };
    Ok(out)
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Second partial `∂_i ∂_j f` by polarization of second directional differences.
fn fd_second_partial<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], i: usize, j: usize) -> Result<Vec<f64>> {
    let n = z.len();
    if i == j {
        return fd_directional(f, z, theta, &unit(n, i), 2);
    }
    let mut eij = unit(n, i);
    eij[j] = 1.0;
    let sum = fd_directional(f, z, theta, &eij, 2)?;
    let dii = fd_directional(f, z, theta, &unit(n, i), 2)?;
    let djj = fd_directional(f, z, theta, &unit(n, j), 2)?;
    Ok((0..sum.len()).map(|k| 0.5 * (sum[k] - dii[k] - djj[k])).collect())
}

/// Gaussian curvature of the graph `(x, y, h(x, y))` from the Monge-patch
/// formula `(h_xx h_yy - h_xy^2) / (1 + h_x^2 + h_y^2)^2`, with every
/// derivative of `h` taken by finite differences.
pub fn gaussian_curvature_graph<H: DiffProgram>(h: &H, theta: &[f64], x: f64, y: f64) -> Result<f64> {
    if h.input_dim() != 2 || h.output_dim() != 1 {
        return Err(Error::InvalidSpec("graph height must map R^2 -> R".into()));
    }
    let p = [x, y];
    let hx = fd_directional(h, &p, theta, &[1.0, 0.0], 1)?[0];
    let hy = fd_directional(h, &p, theta, &[0.0, 1.0], 1)?[0];
    let hxx = fd_second_partial(h, &p, theta, 0, 0)?[0];
    let hyy = fd_second_partial(h, &p, theta, 1, 1)?[0];
    let hxy = fd_second_partial(h, &p, theta, 0, 1)?[0];
    let w = 1.0 + hx * hx + hy * hy;
    Ok((hxx * hyy - hxy * hxy) / (w * w))
}

/// A classical surface with a known chart.
#[derive(Clone, Debug)]
pub enum AnalyticSurface<H = PolyHeight> {
    Sphere { radius: f64 },
    Cylinder { radius: f64 },
    Graph(H),
}

impl<H: DiffProgram + Clone> AnalyticSurface<H> {
    /// Open chart domain as `[(lo, hi); 2]`.
    pub fn domain(&self) -> [(f64, f64); 2] {
        use std::f64::consts::PI;
        match self {
            AnalyticSurface::Sphere { .. } => [(0.0, PI), (-PI, PI)],
            AnalyticSurface::Cylinder { .. } => [(-PI, PI), (-1.0, 1.0)],
            AnalyticSurface::Graph(_) => [(-1.0, 1.0), (-1.0, 1.0)],
        }
    }

    /// Evaluate the chart.
    pub fn chart(&self, point: &[f64]) -> Vec<f64> {
        match self {
            AnalyticSurface::Sphere { radius } => Sphere { radius: *radius }.eval(point, &[]),
            AnalyticSurface::Cylinder { radius } => Cylinder { radius: *radius }.eval(point, &[]),
            AnalyticSurface::Graph(h) => GraphSurface { height: h.clone() }.eval(point, &[]),
        }
    }

    /// Check the chart has a rank-2 Jacobian at `n` deterministic interior
    /// points of its domain.
    pub fn check_embedding(&self, n: usize) -> Result<()> {
        let dom = self.domain();
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            let s = ((k * 7 + 3) % n) as f64 / n as f64 + 0.5 / n as f64;
            let p = [
                dom[0].0 + t * (dom[0].1 - dom[0].0),
                dom[1].0 + s * (dom[1].1 - dom[1].0),
            ];
            let j = self.fd_jacobian(&p)?;
            let g = j.t_matmul(&j);
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
            if !(det > 1e-10 * g.trace() * g.trace()) {
                return Err(Error::SingularMetric(format!(
                    "chart is not an immersion at {p:?}"
                )));
            }
        }
        Ok(())
    }

    fn fd_jacobian(&self, p: &[f64]) -> Result<DenseMatrix> {
        let h = FD_STEPS[0];
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|i| {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                a[i] += h;
                b[i] -= h;
                let (fa, fb) = (self.chart(&a), self.chart(&b));
                fa.iter().zip(&fb).map(|(x, y)| (x - y) / (2.0 * h)).collect()
            })
            .collect();
        Ok(DenseMatrix::from_columns(&cols))
    }

    /// Gaussian curvature: closed form for sphere and cylinder, the Monge
    /// formula for graphs.
    pub fn gaussian_curvature(&self, point: &[f64]) -> Result<f64> {
        match self {
            AnalyticSurface::Sphere { radius } => Ok(1.0 / (radius * radius)),
            AnalyticSurface::Cylinder { .. } => Ok(0.0),
            AnalyticSurface::Graph(h) => gaussian_curvature_graph(h, &[], point[0], point[1]),
        }
    }
}

/// Sum of squared principal curvatures of a surface in `R^3` at a chart point.
pub fn hypersurface_extrinsic_reference<H: DiffProgram + Clone>(
    surface: &AnalyticSurface<H>,
    point: &[f64],
) -> Result<f64> {
    match surface {
        AnalyticSurface::Sphere { radius } => Ok(2.0 / (radius * radius)),
        AnalyticSurface::Cylinder { radius } => Ok(1.0 / (radius * radius)),
        AnalyticSurface::Graph(h) => {
            let p = [point[0], point[1]];
            let hx = fd_directional(h, &p, &[], &[1.0, 0.0], 1)?[0];
            let hy = fd_directional(h, &p, &[], &[0.0, 1.0], 1)?[0];
            let hess = DenseMatrix::from_vec(
                2,
                2,
                vec![
                    fd_second_partial(h, &p, &[], 0, 0)?[0],
                    fd_second_partial(h, &p, &[], 0, 1)?[0],
                    fd_second_partial(h, &p, &[], 1, 0)?[0],
                    fd_second_partial(h, &p, &[], 1, 1)?[0],
                ],
            );
            let w = (1.0 + hx * hx + hy * hy).sqrt();
            let second = hess.scale(1.0 / w);
            let g = DenseMatrix::from_vec(2, 2, vec![1.0 + hx * hx, hx * hy, hx * hy, 1.0 + hy * hy]);
            Ok(squared_principal_sum(&g, &second)?)
        }
    }
}

/// `Tr((G^-1 II)^2)` for first and second fundamental forms `G`, `II`.
fn squared_principal_sum(g: &DenseMatrix, second: &DenseMatrix) -> Result<f64> {
    let shape = SpdFactor::new(g)?.solve_matrix(second);
    Ok(shape.matmul(&shape).trace())
}

/// Shape-operator route for an arbitrary hypersurface chart (`D = m + 1`):
/// unit normal from the orthogonal complement of the finite-difference
/// Jacobian, second fundamental form `n . ∂_i ∂_j f`, and `Tr(S^2)`.
pub fn fd_hypersurface_extrinsic<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<f64> {
    check_args(f, z.len(), theta.len())?;
    let m = z.len();
    let d = f.output_dim();
    if d != m + 1 {
        return Err(Error::NotHypersurface { latent: m, ambient: d });
    }
    let cols: Vec<Vec<f64>> = (0..m)
        .map(|i| fd_directional(f, z, theta, &unit(m, i), 1))
        .collect::<Result<_>>()?;
    let j = DenseMatrix::from_columns(&cols);
    let normal = orthogonal_complement_unit(&cols, d);
    let mut second = DenseMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let fab = fd_second_partial(f, z, theta, a, b)?;
            let v: f64 = fab.iter().zip(&normal).map(|(x, y)| x * y).sum();
            second[(a, b)] = v;
            second[(b, a)] = v;
        }
    }
    squared_principal_sum(&j.t_matmul(&j), &second)
}

/// Gram-Schmidt the columns, then return the normalized residual of the
/// standard basis vector that is least aligned with their span.
fn orthogonal_complement_unit(cols: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.iter().map(|x| x / n).collect());
    }
    let mut best = vec![0.0; d];
    let mut best_norm = -1.0;
    for k in 0..d {
        let mut v = unit(d, k);
        for b in &basis {
            let p = b[k];
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > best_norm {
            best_norm = n;
            best = v.iter().map(|x| x / n).collect();
        }
    }
    best
}

/// Monte Carlo estimate of `Tr(A)` from `n` Gaussian probes `v^T A v`.
/// Returns `(mean, standard error)`; the standard error is infinite for a
/// single sample.
pub fn mc_trace_reference(a: &DenseMatrix, n_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if a.rows() != a.cols() {
        return Err(Error::dim("trace matrix columns", a.rows(), a.cols()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidSpec("at least one sample is required".into()));
    }
    let mut r = rng::stream(seed, 0);
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| {
            let v = rng::normal_vec(&mut r, a.rows());
            let av = a.matvec(&v);
            v.iter().zip(&av).map(|(x, y)| x * y).sum()
        })
        .collect();
    Ok(mean_and_standard_error(&samples))
}

/// Sample mean and its standard error (infinite for fewer than two samples).
pub fn mean_and_standard_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Convenience for programs that only need a checked plain evaluation.
pub fn value<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    evaluate(f, z, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programs::{LinearMap, Paraboloid, Power};

    #[test]
    fn first_order_on_linear_map() {
        let a = DenseMatrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
        let d = fd_directional(&LinearMap::new(a), &[0.2, 0.4], &[], &[1.0, -1.0], 1).unwrap();
        for (x, y) in d.iter().zip([1.0, -1.0, 2.0]) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn second_order_of_square() {
        let d = fd_directional(&Power { exponent: 2 }, &[0.3], &[], &[1.0], 2).unwrap();
        assert!((d[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn third_order_of_cube() {
        let d = fd_directional(&Power { exponent: 3 }, &[0.3], &[], &[1.0], 3).unwrap();
        assert!((d[0] - 6.0).abs() < 1e-3);
    }

    #[test]
    fn graph_gaussian_curvature() {
        let h = PolyHeight::bowl();
        assert!((gaussian_curvature_graph(&h, &[], 0.0, 0.0).unwrap() - 4.0).abs() < 1e-6);
        assert!((gaussian_curvature_graph(&h, &[], 0.5, 0.0).unwrap() - 1.0).abs() < 1e-6);
        let plane = PolyHeight {
            terms: vec![(1, 0, 0.3), (0, 1, -2.0)],
        };
        assert!(gaussian_curvature_graph(&plane, &[], 0.1, 0.7).unwrap().abs() < 1e-6);
    }

    #[test]
    fn principal_curvature_sums() {
        let s: AnalyticSurface = AnalyticSurface::Sphere { radius: 1.0 };
        assert_eq!(hypersurface_extrinsic_reference(&s, &[1.0, 0.0]).unwrap(), 2.0);
        let s: AnalyticSurface = AnalyticSurface::Sphere { radius: 2.0 };
        assert_eq!(hypersurface_extrinsic_reference(&s, &[1.0, 0.0]).unwrap(), 0.5);
        let c: AnalyticSurface = AnalyticSurface::Cylinder { radius: 1.0 };
        assert_eq!(hypersurface_extrinsic_reference(&c, &[1.0, 0.0]).unwrap(), 1.0);
        let plane = AnalyticSurface::Graph(PolyHeight {
            terms: vec![(1, 0, 1.0)],
        });
        assert!(hypersurface_extrinsic_reference(&plane, &[0.2, 0.2]).unwrap().abs() < 1e-8);
        let bowl = AnalyticSurface::Graph(PolyHeight::bowl());
        assert!((hypersurface_extrinsic_reference(&bowl, &[0.0, 0.0]).unwrap() - 8.0).abs() < 1e-5);
    }

    #[test]
    fn shape_operator_route_on_charts() {
        let e = fd_hypersurface_extrinsic(&Paraboloid, &[0.0, 0.0], &[]).unwrap();
        assert!((e - 8.0).abs() < 1e-4);
        let e = fd_hypersurface_extrinsic(&Sphere { radius: 1.0 }, &[1.2, 0.4], &[]).unwrap();
        assert!((e - 2.0).abs() < 1e-4);
        let not_hyper = LinearMap::new(DenseMatrix::identity(2).add(&DenseMatrix::zeros(2, 2)));
        assert!(matches!(
            fd_hypersurface_extrinsic(&not_hyper, &[0.0, 0.0], &[]),
            Err(Error::NotHypersurface { .. })
        ));
    }

    #[test]
    fn embeddings_are_immersions() {
        let s: AnalyticSurface = AnalyticSurface::Sphere { radius: 1.0 };
        s.check_embedding(16).unwrap();
        let c: AnalyticSurface = AnalyticSurface::Cylinder { radius: 2.0 };
        c.check_embedding(16).unwrap();
        AnalyticSurface::Graph(PolyHeight::bowl()).check_embedding(16).unwrap();
    }

    #[test]
    fn trace_estimates() {
        let (mean, se) = mc_trace_reference(&DenseMatrix::identity(3), 10_000, 1).unwrap();
        assert!((mean - 3.0).abs() < 3.0 * se);
        let a = DenseMatrix::from_vec(2, 2, vec![2.0, 1.0, 0.0, 3.0]);
        let (mean, se) = mc_trace_reference(&a, 10_000, 2).unwrap();
        assert!((mean - 5.0).abs() < 3.0 * se);
    }

    #[test]
    fn single_probe_is_quadratic_form() {
        let a = DenseMatrix::from_vec(2, 2, vec![2.0, 1.0, 0.0, 3.0]);
        let (mean, se) = mc_trace_reference(&a, 1, 9).unwrap();
        let v = rng::normal_vec(&mut rng::stream(9, 0), 2);
        let q = 2.0 * v[0] * v[0] + v[0] * v[1] + 3.0 * v[1] * v[1];
        assert!((mean - q).abs() < 1e-12);
        assert!(se.is_infinite());
    }
}
