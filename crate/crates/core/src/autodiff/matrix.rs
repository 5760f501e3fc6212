//! Small dense matrices over any [`Scalar`], plus the regularized SPD solve
//! used for every metric inverse.

use std::fmt;

use super::Scalar;
use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

/// The concrete `f64` matrix used at API boundaries.
pub type DenseMatrix = Matrix<f64>;

impl<S: fmt::Debug> fmt::Debug for Matrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", &self.data[r * self.cols..(r + 1) * self.cols])?;
        }
        write!(f, "]")
    }
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Build from column vectors of equal length.
    pub fn from_columns(cols: &[Vec<S>]) -> Self {
        let rows = cols.first().map_or(0, Vec::len);
        Self::from_fn(rows, cols.len(), |r, c| cols[c][r])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<S> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..o.cols {
                    out.data[i * o.cols + j] += a * o.data[k * o.cols + j];
                }
            }
        }
        out
    }

    /// `self^T * o` without materializing the transpose.
    pub fn t_matmul(&self, o: &Self) -> Self {
        assert_eq!(self.rows, o.rows, "t_matmul inner dimension");
        let mut out = Self::zeros(self.cols, o.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self[(k, i)];
                for j in 0..o.cols {
                    out.data[i * o.cols + j] += a * o.data[k * o.cols + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.cols, v.len(), "matvec dimension");
        (0..self.rows)
            .map(|r| dot(&self.data[r * self.cols..(r + 1) * self.cols], v))
            .collect()
    }

    /// `self^T * v`.
    pub fn t_matvec(&self, v: &[S]) -> Vec<S> {
        assert_eq!(self.rows, v.len(), "t_matvec dimension");
        let mut out = vec![S::zero(); self.cols];
        for (r, &vr) in v.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.cols + c] * vr;
            }
        }
        out
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a.scale(c)).collect(),
        }
    }

    pub fn scale_by(&self, c: S) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| a * c).collect(),
        }
    }

    pub fn trace(&self) -> S {
        assert_eq!(self.rows, self.cols, "trace of non-square matrix");
        let mut t = S::zero();
        for i in 0..self.rows {
            t += self[(i, i)];
        }
        t
    }

    /// `Tr(self^T o)`, the Frobenius inner product.
    pub fn frobenius_dot(&self, o: &Self) -> S {
        dot(&self.data, &o.data)
    }

    pub fn values(&self) -> DenseMatrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(Scalar::value).collect(),
        }
    }

    pub fn map<T>(&self, f: impl FnMut(&S) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Largest entry of `|self - self^T|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let mut diff: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let a = self[(r, c)].value();
                scale = scale.max(a.abs());
                if r < self.cols && c < self.rows {
                    diff = diff.max((a - self[(c, r)].value()).abs());
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }
}

impl DenseMatrix {
    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<S> std::ops::Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &S {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl<S> std::ops::IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut S {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Largest metric handled by the dense solver.
pub const MAX_SPD_DIM: usize = 64;

/// Jitter added to the diagonal, relative to the mean diagonal entry.
pub const JITTER_REL: f64 = 1e-9;

/// Relative asymmetry above which a metric is rejected.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// Cholesky factor of `G + eps*I` with `eps = 1e-9 * trace(G) / m`.
///
/// The jitter is a constant with respect to differentiation, so derivatives
/// taken through the factorization satisfy `d(A^-1) = -A^-1 dA A^-1` for the
/// jittered matrix `A`.
#[derive(Clone, Debug)]
pub struct SpdFactor<S> {
    n: usize,
    lower: Vec<S>,
    jitter: f64,
    min_pivot_ratio: f64,
}

impl<S: Scalar> SpdFactor<S> {
    pub fn new(g: &Matrix<S>) -> Result<Self> {
        Self::with_jitter(g, JITTER_REL)
    }

    /// Factor `G` itself, without jitter. Used where rank-deficient metrics
    /// are rejected anyway and the jitter would only perturb the result.
    pub fn unjittered(g: &Matrix<S>) -> Result<Self> {
        Self::with_jitter(g, 0.0)
    }

    fn with_jitter(g: &Matrix<S>, rel: f64) -> Result<Self> {
        let n = g.rows();
        if g.cols() != n {
            return Err(Error::dim("metric columns", n, g.cols()));
        }
        if n > MAX_SPD_DIM {
            return Err(Error::TooLarge {
                what: "metric",
                size: n,
                limit: MAX_SPD_DIM,
            });
        }
        let asym = g.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(Error::NonSymmetric { asymmetry: asym });
        }
        let tr = g.trace().value();
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::SingularMetric(format!(
                "metric trace is {tr}, expected positive and finite"
            )));
        }
        let mean_diag = tr / n as f64;
        let jitter = rel * mean_diag;
        let mut lower = vec![S::zero(); n * n];
        let mut min_pivot_ratio = f64::INFINITY;
        for j in 0..n {
            let mut d = g[(j, j)] + S::from_f64(jitter);
            for k in 0..j {
                let l = lower[j * n + k];
                d -= l * l;
            }
            let dv = d.value();
            if !(dv.is_finite() && dv > 0.0) {
                return Err(Error::SingularMetric(format!(
                    "Cholesky pivot {j} is {dv:.3e} (jitter {jitter:.3e})"
                )));
            }
            min_pivot_ratio = min_pivot_ratio.min(dv / mean_diag);
            let ljj = d.sqrt();
            lower[j * n + j] = ljj;
            for i in j + 1..n {
                let mut s = g[(i, j)];
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = s / ljj;
            }
        }
        Ok(SpdFactor {
            n,
            lower,
            jitter,
            min_pivot_ratio,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Smallest Cholesky pivot divided by the mean diagonal entry; near
    /// `1e-9` for a rank-deficient metric.
    pub fn min_pivot_ratio(&self) -> f64 {
        self.min_pivot_ratio
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        assert_eq!(b.len(), n, "solve right-hand side");
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for (k, yk) in y.iter().enumerate().take(i) {
                s -= self.lower[i * n + k] * *yk;
            }
            y[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                s -= self.lower[k * n + i] * *yk;
            }
            y[i] = s / self.lower[i * n + i];
        }
        y
    }

    /// Solve for every column of `b`.
    pub fn solve_matrix(&self, b: &Matrix<S>) -> Matrix<S> {
        let cols: Vec<Vec<S>> = (0..b.cols()).map(|c| self.solve(&b.column(c))).collect();
        Matrix::from_columns(&cols)
    }

    pub fn inverse(&self) -> Matrix<S> {
        let inv = self.solve_matrix(&Matrix::identity(self.n));
        // Symmetrize so downstream symmetry checks see an exactly symmetric inverse.
        Matrix::from_fn(self.n, self.n, |r, c| {
            if r <= c {
                inv[(r, c)]
            } else {
                inv[(c, r)]
            }
        })
    }
}

/// Solve `(G + eps*I) x = b`.
pub fn solve_spd<S: Scalar>(g: &Matrix<S>, b: &[S]) -> Result<Vec<S>> {
    if b.len() != g.rows() {
        return Err(Error::dim("right-hand side", g.rows(), b.len()));
    }
    Ok(SpdFactor::new(g)?.solve(b))
}

/// `(G + eps*I)^-1`.
pub fn inverse_spd<S: Scalar>(g: &Matrix<S>) -> Result<Matrix<S>> {
    Ok(SpdFactor::new(g)?.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve() {
        let x = solve_spd(&DenseMatrix::identity(2), &[3.0, 4.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-8 && (x[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn diagonal_solve() {
        let g = DenseMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 1.0]);
        let x = solve_spd(&g, &[2.0, 2.0]).unwrap();
        assert!((x[0] - 1.0).abs() <= 1e-8);
        assert!((x[1] - 2.0).abs() <= 1e-8);
    }

    #[test]
    fn scalar_inverse() {
        let inv = inverse_spd(&DenseMatrix::from_vec(1, 1, vec![4.0])).unwrap();
        assert!((inv[(0, 0)] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn rejects_asymmetric() {
        let g = DenseMatrix::from_vec(2, 2, vec![2.0, 1.0, 0.0, 1.0]);
        assert!(matches!(
            solve_spd(&g, &[1.0, 1.0]),
            Err(Error::NonSymmetric { .. })
        ));
    }

    #[test]
    fn rejects_zero_metric() {
        let g = DenseMatrix::zeros(2, 2);
        assert!(matches!(inverse_spd(&g), Err(Error::SingularMetric(_))));
    }

    #[test]
    fn rank_deficient_metric_survives_with_small_pivot() {
        // rank one: [1 1; 1 1]
        let g = DenseMatrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        let f = SpdFactor::new(&g).unwrap();
        assert!(f.min_pivot_ratio() < 1e-7);
    }

    #[test]
    fn rejects_oversized() {
        let g = DenseMatrix::identity(65);
        assert!(matches!(inverse_spd(&g), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn matmul_and_transpose() {
        let a = DenseMatrix::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
        let g = a.t_matmul(&a);
        assert_eq!(g, DenseMatrix::from_vec(2, 2, vec![5.0, 0.0, 0.0, 1.0]));
        assert_eq!(a.transpose().matmul(&a), g);
    }
}
