//! Exact curvature of a parametrized manifold `f: R^m -> R^D`.
//!
//! Everything is computed from the [`LocalJet`] of `f` at a point. Metric
//! derivatives come from the product rule applied to exact partials of `f`,
//! never from finite differences, so these values serve as ground truth for
//! the stochastic estimators.

mod jet;

pub use jet::{jet_len, JetView, LocalJet};

use crate::autodiff::{dot, Compose, DenseMatrix, DiffProgram, SpdFactor};
use crate::error::{Error, Result};

/// Largest latent dimension for which the full Riemann tensor is built.
pub const MAX_EXACT_LATENT: usize = 16;

/// Exact-mode rank test: a Cholesky pivot below this fraction of the mean
/// diagonal marks the Jacobian as rank deficient.
pub const RANK_TOL: f64 = 1e-7;

/// Metric bundle at one latent point.
#[derive(Clone, Debug)]
pub struct MetricState {
    pub z: Vec<f64>,
    pub jacobian: DenseMatrix,
    pub metric: DenseMatrix,
    pub inverse: DenseMatrix,
}

/// `gamma[a][b][c] = Γ^a_{bc}`, flattened.
#[derive(Clone, Debug, PartialEq)]
pub struct ChristoffelArray {
    dim: usize,
    data: Vec<f64>,
}

impl ChristoffelArray {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        let m = self.dim;
        self.data[(a * m + b) * m + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

/// `R^a_{bcd}`, flattened in index order.
#[derive(Clone, Debug, PartialEq)]
pub struct RiemannTensor {
    dim: usize,
    data: Vec<f64>,
}

impl RiemannTensor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.dim;
        self.data[((a * m + b) * m + c) * m + d]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvatureMode {
    Exact,
    Estimated,
}

/// Curvature values at one point with their provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureReport {
    /// Squared scalar curvature.
    pub intrinsic: f64,
    /// Dirichlet energy of the tangent-space map.
    pub extrinsic: f64,
    pub mode: CurvatureMode,
    /// Probe samples per estimate; zero in exact mode.
    pub samples: usize,
    pub seed: u64,
}

/// Metric, its inverse and its first (and, from third-order jets, second)
/// partial derivatives at one point.
#[derive(Clone, Debug)]
pub struct LocalGeometry {
    m: usize,
    d: usize,
    jet: LocalJet,
    g: DenseMatrix,
    ginv: DenseMatrix,
    /// `dg[c] = ∂_c G`
    dg: Vec<DenseMatrix>,
    /// `ddg[c * m + e] = ∂_c ∂_e G`
    ddg: Vec<DenseMatrix>,
}

impl LocalGeometry {
    /// Build from a jet of order at least two. Rank-deficient Jacobians are
    /// an error here: exact curvature is undefined at such points.
    pub fn from_jet(jet: LocalJet) -> Result<Self> {
        jet.require_order(2)?;
        let m = jet.latent_dim();
        let d = jet.ambient_dim();
        let g = DenseMatrix::from_fn(m, m, |a, b| dot(jet.d1(a), jet.d1(b)));
        let factor = SpdFactor::unjittered(&g)?;
        if factor.min_pivot_ratio() < RANK_TOL {
            return Err(Error::SingularMetric(format!(
                "Jacobian is rank deficient (pivot ratio {:.3e})",
                factor.min_pivot_ratio()
            )));
        }
        let ginv = factor.inverse();
        let dg = (0..m)
            .map(|c| {
                DenseMatrix::from_fn(m, m, |a, b| {
                    dot(jet.d2(a, c), jet.d1(b)) + dot(jet.d1(a), jet.d2(b, c))
                })
            })
            .collect();
        let ddg = if jet.order() >= 3 {
            let mut out = Vec::with_capacity(m * m);
            for c in 0..m {
                for e in 0..m {
                    out.push(DenseMatrix::from_fn(m, m, |a, b| {
                        dot(jet.d3(a, c, e), jet.d1(b))
                            + dot(jet.d2(a, c), jet.d2(b, e))
                            + dot(jet.d2(a, e), jet.d2(b, c))
                            + dot(jet.d1(a), jet.d3(b, c, e))
                    }));
                }
            }
            out
        } else {
            Vec::new()
        };
        Ok(LocalGeometry {
            m,
            d,
            jet,
            g,
            ginv,
            dg,
            ddg,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.m
    }

    pub fn metric(&self) -> &DenseMatrix {
        &self.g
    }

    pub fn metric_inverse(&self) -> &DenseMatrix {
        &self.ginv
    }

    /// `∂_c G`.
    pub fn metric_derivative(&self, c: usize) -> &DenseMatrix {
        &self.dg[c]
    }

    pub fn jacobian(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.d, self.m, |r, c| self.jet.d1(c)[r])
    }

    pub fn metric_state(&self, z: &[f64]) -> MetricState {
        MetricState {
            z: z.to_vec(),
            jacobian: self.jacobian(),
            metric: self.g.clone(),
            inverse: self.ginv.clone(),
        }
    }

    fn christoffel_lowered(&self, lam: usize, b: usize, c: usize) -> f64 {
        self.dg[c][(lam, b)] + self.dg[b][(lam, c)] - self.dg[lam][(b, c)]
    }

    pub fn christoffel(&self) -> ChristoffelArray {
        let m = self.m;
        let mut data = vec![0.0; m * m * m];
        for a in 0..m {
            for b in 0..m {
                for c in b..m {
                    let mut s = 0.0;
                    for lam in 0..m {
                        s += self.ginv[(a, lam)] * self.christoffel_lowered(lam, b, c);
                    }
                    data[(a * m + b) * m + c] = 0.5 * s;
                    data[(a * m + c) * m + b] = 0.5 * s;
                }
            }
        }
        ChristoffelArray { dim: m, data }
    }

    fn require_third_order(&self) -> Result<()> {
        if self.ddg.is_empty() {
            return Err(Error::InvalidSpec(
                "intrinsic curvature needs a third-order jet".into(),
            ));
        }
        if self.m > MAX_EXACT_LATENT {
            return Err(Error::TooLarge {
                what: "latent dimension for exact curvature",
                size: self.m,
                limit: MAX_EXACT_LATENT,
            });
        }
        Ok(())
    }

    /// `dgamma[d][a][b][c] = ∂_d Γ^a_{bc}`.
    fn christoffel_derivatives(&self) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m * m * m * m];
        for dd in 0..m {
            // ∂_d G^{-1} = -G^{-1} (∂_d G) G^{-1}
            let dginv = self.ginv.matmul(&self.dg[dd]).matmul(&self.ginv).scale(-1.0);
            for a in 0..m {
                for b in 0..m {
                    for c in b..m {
                        let mut s = 0.0;
                        for lam in 0..m {
                            let lowered = self.christoffel_lowered(lam, b, c);
                            let dlowered = self.ddg[dd * m + c][(lam, b)]
                                + self.ddg[dd * m + b][(lam, c)]
                                - self.ddg[dd * m + lam][(b, c)];
                            s += dginv[(a, lam)] * lowered + self.ginv[(a, lam)] * dlowered;
                        }
                        out[((dd * m + a) * m + b) * m + c] = 0.5 * s;
                        out[((dd * m + a) * m + c) * m + b] = 0.5 * s;
                    }
                }
            }
        }
        out
    }

    pub fn riemann(&self) -> Result<RiemannTensor> {
        self.require_third_order()?;
        let m = self.m;
        let gam = self.christoffel();
        let dgam = self.christoffel_derivatives();
        let dg = |d: usize, a: usize, b: usize, c: usize| dgam[((d * m + a) * m + b) * m + c];
        let mut data = vec![0.0; m * m * m * m];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let mut r = dg(c, a, d, b) - dg(d, a, c, b);
                        for lam in 0..m {
                            r += gam.get(a, c, lam) * gam.get(lam, d, b)
                                - gam.get(a, d, lam) * gam.get(lam, c, b);
                        }
                        data[((a * m + b) * m + c) * m + d] = r;
                    }
                }
            }
        }
        Ok(RiemannTensor { dim: m, data })
    }

    /// `Ric_{ij} = sum_a R^a_{iaj}`.
    pub fn ricci(&self) -> Result<DenseMatrix> {
        let r = self.riemann()?;
        Ok(ricci_from_riemann(&r))
    }

    /// Signed scalar curvature `Tr(G^-1 Ric)`.
    pub fn scalar_curvature(&self) -> Result<f64> {
        let ric = self.ricci()?;
        Ok(self.ginv.frobenius_dot(&ric))
    }

    /// Squared scalar curvature.
    pub fn intrinsic(&self) -> Result<f64> {
        let r = self.scalar_curvature()?;
        Ok(r * r)
    }

    /// `T = J G^-1 J^T`, the orthogonal projector onto the tangent space.
    pub fn tangent_projection(&self) -> DenseMatrix {
        let j = self.jacobian();
        j.matmul(&self.ginv).matmul(&j.transpose())
    }

    /// `∂_i T` for every latent direction.
    pub fn tangent_projection_derivatives(&self) -> Vec<DenseMatrix> {
        let j = self.jacobian();
        let jg = j.matmul(&self.ginv);
        let jt = j.transpose();
        (0..self.m)
            .map(|i| {
                let h = DenseMatrix::from_fn(self.d, self.m, |r, a| self.jet.d2(a, i)[r]);
                let a = h.matmul(&self.ginv).matmul(&jt);
                let b = jg.matmul(&h.transpose());
                let c = jg.matmul(&self.dg[i]).matmul(&jg.transpose());
                a.add(&b).sub(&c)
            })
            .collect()
    }

    /// `½ sum_ij (G^-1)_ij Tr((∂_i T)^T ∂_j T)`.
    pub fn extrinsic(&self) -> f64 {
        let dt = self.tangent_projection_derivatives();
        let mut e = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                e += self.ginv[(i, j)] * dt[i].frobenius_dot(&dt[j]);
            }
        }
        (0.5 * e).max(0.0)
    }

    pub fn exact_report(&self) -> Result<CurvatureReport> {
        Ok(CurvatureReport {
            intrinsic: self.intrinsic()?,
            extrinsic: self.extrinsic(),
            mode: CurvatureMode::Exact,
            samples: 0,
            seed: 0,
        })
    }
}

fn ricci_from_riemann(r: &RiemannTensor) -> DenseMatrix {
    let m = r.dim();
    DenseMatrix::from_fn(m, m, |i, j| (0..m).map(|a| r.get(a, i, a, j)).sum())
}

fn geometry<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], order: usize) -> Result<LocalGeometry> {
    LocalGeometry::from_jet(LocalJet::from_program(f, z, theta, order)?)
}

/// `J`, `G = J^T J` and the regularized inverse at `z`.
pub fn pullback_metric<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<MetricState> {
    let jet = LocalJet::from_program(f, z, theta, 1)?;
    let m = z.len();
    let j = DenseMatrix::from_fn(jet.ambient_dim(), m, |r, c| jet.d1(c)[r]);
    let g = j.t_matmul(&j);
    let factor = SpdFactor::new(&g)?;
    if factor.min_pivot_ratio() < RANK_TOL {
        return Err(Error::SingularMetric(format!(
            "Jacobian is rank deficient (pivot ratio {:.3e})",
            factor.min_pivot_ratio()
        )));
    }
    Ok(MetricState {
        z: z.to_vec(),
        jacobian: j,
        metric: g,
        inverse: factor.inverse(),
    })
}

pub fn christoffel<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<ChristoffelArray> {
    Ok(geometry(f, z, theta, 2)?.christoffel())
}

pub fn riemann_tensor<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<RiemannTensor> {
    geometry(f, z, theta, 3)?.riemann()
}

pub fn ricci<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<DenseMatrix> {
    geometry(f, z, theta, 3)?.ricci()
}

pub fn scalar_curvature<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<f64> {
    geometry(f, z, theta, 3)?.scalar_curvature()
}

pub fn intrinsic_measure<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<f64> {
    geometry(f, z, theta, 3)?.intrinsic()
}

pub fn tangent_projection<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<DenseMatrix> {
    Ok(geometry(f, z, theta, 2)?.tangent_projection())
}

pub fn extrinsic_measure<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<f64> {
    Ok(geometry(f, z, theta, 2)?.extrinsic())
}

/// Both exact measures at once.
pub fn exact_curvature<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64]) -> Result<CurvatureReport> {
    geometry(f, z, theta, 3)?.exact_report()
}

/// `f ∘ h^-1`, given the inverse coordinate change directly. The point `z`
/// of `f` corresponds to `h(z)` of the result.
pub fn reparametrize<F: DiffProgram, H: DiffProgram>(f: F, h_inverse: H) -> Result<Compose<F, H>> {
    if h_inverse.input_dim() != h_inverse.output_dim() {
        return Err(Error::InvalidSpec(format!(
            "coordinate change must be square, got R^{} -> R^{}",
            h_inverse.input_dim(),
            h_inverse.output_dim()
        )));
    }
    Compose::new(f, h_inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programs::{Cylinder, LinearMap, Paraboloid, Sphere};

    fn linear() -> LinearMap {
        LinearMap::new(DenseMatrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0]))
    }

    #[test]
    fn metric_of_linear_map() {
        let s = pullback_metric(&linear(), &[0.1, 0.2], &[]).unwrap();
        assert_eq!(s.metric, DenseMatrix::from_vec(2, 2, vec![5.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn metric_of_paraboloid() {
        let s = pullback_metric(&Paraboloid, &[0.0, 0.0], &[]).unwrap();
        assert_eq!(s.metric, DenseMatrix::identity(2));
        let s = pullback_metric(&Paraboloid, &[0.5, 0.0], &[]).unwrap();
        assert_eq!(s.metric, DenseMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 1.0]));
        let prod = s.inverse.matmul(&s.metric);
        assert!(prod.sub(&DenseMatrix::identity(2)).max_abs() < 1e-6);
    }

    #[test]
    fn christoffel_values() {
        assert_eq!(christoffel(&linear(), &[0.3, 0.3], &[]).unwrap().max_abs(), 0.0);
        assert_eq!(christoffel(&Paraboloid, &[0.0, 0.0], &[]).unwrap().max_abs(), 0.0);
        let g = christoffel(&Paraboloid, &[0.5, 0.0], &[]).unwrap();
        assert!((g.get(0, 0, 0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn curvature_of_classical_surfaces() {
        let r = scalar_curvature(&Sphere { radius: 1.0 }, &[std::f64::consts::FRAC_PI_2, 0.0], &[]).unwrap();
        assert!((r - 2.0).abs() < 1e-6);
        let r = scalar_curvature(&Paraboloid, &[0.0, 0.0], &[]).unwrap();
        assert!((r - 8.0).abs() < 1e-6);
        let r = scalar_curvature(&Cylinder { radius: 1.0 }, &[0.4, -0.2], &[]).unwrap();
        assert!(r.abs() < 1e-8);
        assert!(riemann_tensor(&Cylinder { radius: 1.0 }, &[0.4, -0.2], &[]).unwrap().max_abs() < 1e-8);
        assert!((intrinsic_measure(&Paraboloid, &[0.0, 0.0], &[]).unwrap() - 64.0).abs() < 1e-5);
    }

    #[test]
    fn extrinsic_of_classical_surfaces() {
        assert_eq!(extrinsic_measure(&linear(), &[0.0, 1.0], &[]).unwrap(), 0.0);
        let e = extrinsic_measure(&Cylinder { radius: 1.0 }, &[1.0, 2.0], &[]).unwrap();
        assert!((e - 1.0).abs() < 1e-8);
        let e = extrinsic_measure(&Paraboloid, &[0.0, 0.0], &[]).unwrap();
        assert!((e - 8.0).abs() < 1e-7);
        let e = extrinsic_measure(&Sphere { radius: 1.0 }, &[1.0, 0.5], &[]).unwrap();
        assert!((e - 2.0).abs() < 1e-7);
    }

    #[test]
    fn projection_at_paraboloid_origin() {
        let t = tangent_projection(&Paraboloid, &[0.0, 0.0], &[]).unwrap();
        let want = DenseMatrix::from_vec(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(t.sub(&want).max_abs() < 1e-8);
    }

    #[test]
    fn rank_deficient_point_is_rejected() {
        // all columns parallel
        let f = LinearMap::new(DenseMatrix::from_vec(3, 2, vec![1.0, 1.0, 2.0, 2.0, 0.0, 0.0]));
        assert!(matches!(
            extrinsic_measure(&f, &[0.0, 0.0], &[]),
            Err(Error::SingularMetric(_))
        ));
    }

    #[test]
    fn riemann_antisymmetry() {
        let r = riemann_tensor(&Sphere { radius: 1.3 }, &[0.9, 0.2], &[]).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    for d in 0..2 {
                        assert!((r.get(a, b, c, d) + r.get(a, b, d, c)).abs() < 1e-8);
                    }
                }
            }
        }
    }
}
