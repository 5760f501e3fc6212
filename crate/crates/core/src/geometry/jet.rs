use crate::autodiff::{check_args, lift, DiffProgram, Dual, Matrix, Scalar};
use crate::error::{Error, Result};

/// Number of stored components for a jet of the given order in `m` latent
/// variables: value, then `m` first, `m^2` second and `m^3` third partials.
pub fn jet_len(order: usize, m: usize) -> usize {
    (0..=order).map(|k| m.pow(k as u32)).sum()
}

/// Value and partial derivatives (up to third order) of a map
/// `R^m -> R^D` at one latent point.
///
/// Component `k` is a contiguous `D`-vector. Components are ordered value,
/// `d_i`, `d_i d_j` (row-major in `(i, j)`), `d_i d_j d_k`; mixed partials
/// are stored for every index order even though they are symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalJet {
    latent: usize,
    ambient: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl LocalJet {
    pub fn from_coeffs(latent: usize, ambient: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        if order > 3 {
            return Err(Error::InvalidSpec(format!("jet order {order} exceeds 3")));
        }
        let want = jet_len(order, latent) * ambient;
        if coeffs.len() != want {
            return Err(Error::dim("jet coefficients", want, coeffs.len()));
        }
        Ok(LocalJet {
            latent,
            ambient,
            order,
            coeffs,
        })
    }

    /// Collect the jet of `f` at `z` by nested directional differentiation:
    /// one evaluation over `Dual^k` per unordered index tuple.
    pub fn from_program<P: DiffProgram>(f: &P, z: &[f64], theta: &[f64], order: usize) -> Result<Self> {
        check_args(f, z.len(), theta.len())?;
        if order > 3 {
            return Err(Error::InvalidSpec(format!("jet order {order} exceeds 3")));
        }
        let m = z.len();
        let d = f.output_dim();
        let mut jet = LocalJet {
            latent: m,
            ambient: d,
            order,
            coeffs: vec![0.0; jet_len(order, m) * d],
        };
        let value = f.eval(z, theta);
        jet.component_mut(0).copy_from_slice(&value);
        let unit = |i: usize, k: usize| if i == k { 1.0 } else { 0.0 };
        if order >= 1 {
            let t1 = lift(theta);
            for i in 0..m {
                let zs: Vec<Dual<f64>> = z
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| Dual::new(x, unit(i, k)))
                    .collect();
                let y = f.eval(&zs, &t1);
                let idx = jet.index1(i);
                for (o, v) in y.iter().enumerate() {
                    jet.coeffs[idx * d + o] = v.du;
                }
            }
        }
        if order >= 2 {
            let t2 = lift(&lift(theta));
            for i in 0..m {
                for j in i..m {
                    let zs: Vec<Dual<Dual<f64>>> = z
                        .iter()
                        .enumerate()
                        .map(|(k, &x)| {
                            Dual::new(Dual::new(x, unit(j, k)), Dual::new(unit(i, k), 0.0))
                        })
                        .collect();
                    let y = f.eval(&zs, &t2);
                    for (o, v) in y.iter().enumerate() {
                        let val = v.du.du;
                        let (ij, ji) = (jet.index2(i, j), jet.index2(j, i));
                        jet.coeffs[ij * d + o] = val;
                        jet.coeffs[ji * d + o] = val;
                    }
                }
            }
        }
        if order >= 3 {
            let t3 = lift(&lift(&lift(theta)));
            for i in 0..m {
                for j in i..m {
                    for l in j..m {
                        let zs: Vec<Dual<Dual<Dual<f64>>>> = z
                            .iter()
                            .enumerate()
                            .map(|(k, &x)| {
                                let inner = Dual::new(Dual::new(x, unit(l, k)), Dual::new(unit(j, k), 0.0));
                                let tangent = Dual::new(Dual::new(unit(i, k), 0.0), Dual::new(0.0, 0.0));
                                Dual::new(inner, tangent)
                            })
                            .collect();
                        let y = f.eval(&zs, &t3);
                        for (o, v) in y.iter().enumerate() {
                            let val = v.du.du.du;
                            for (a, b, c) in permutations3(i, j, l) {
                                let idx = jet.index3(a, b, c);
                                jet.coeffs[idx * d + o] = val;
                            }
                        }
                    }
                }
            }
        }
        Ok(jet)
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn index1(&self, i: usize) -> usize {
        1 + i
    }

    #[inline]
    pub fn index2(&self, i: usize, j: usize) -> usize {
        1 + self.latent + i * self.latent + j
    }

    #[inline]
    pub fn index3(&self, i: usize, j: usize, k: usize) -> usize {
        let m = self.latent;
        1 + m + m * m + (i * m + j) * m + k
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.coeffs[k * self.ambient..(k + 1) * self.ambient]
    }

    fn component_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.coeffs[k * self.ambient..(k + 1) * self.ambient]
    }

    pub fn value(&self) -> &[f64] {
        self.component(0)
    }

    pub fn d1(&self, i: usize) -> &[f64] {
        self.component(self.index1(i))
    }

    pub fn d2(&self, i: usize, j: usize) -> &[f64] {
        self.component(self.index2(i, j))
    }

    pub fn d3(&self, i: usize, j: usize, k: usize) -> &[f64] {
        self.component(self.index3(i, j, k))
    }

    pub(crate) fn require_order(&self, order: usize) -> Result<()> {
        if self.order < order {
            Err(Error::InvalidSpec(format!(
                "jet of order {} cannot supply derivatives of order {order}",
                self.order
            )))
        } else {
            Ok(())
        }
    }
}

/// Borrowed jet coefficients over any scalar type, in the [`LocalJet`]
/// layout.
#[derive(Clone, Copy, Debug)]
pub struct JetView<'a, S> {
    latent: usize,
    ambient: usize,
    order: usize,
    coeffs: &'a [S],
}

impl<'a, S: Scalar> JetView<'a, S> {
    pub fn new(latent: usize, ambient: usize, order: usize, coeffs: &'a [S]) -> Result<Self> {
        if order > 3 {
            return Err(Error::InvalidSpec(format!("jet order {order} exceeds 3")));
        }
        let want = jet_len(order, latent) * ambient;
        if coeffs.len() != want {
            return Err(Error::dim("jet coefficients", want, coeffs.len()));
        }
        Ok(JetView {
            latent,
            ambient,
            order,
            coeffs,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn component(&self, k: usize) -> &'a [S] {
        &self.coeffs[k * self.ambient..(k + 1) * self.ambient]
    }

    pub fn value(&self) -> &'a [S] {
        self.component(0)
    }

    pub fn d1(&self, i: usize) -> &'a [S] {
        self.component(1 + i)
    }

    pub fn d2(&self, i: usize, j: usize) -> &'a [S] {
        self.component(1 + self.latent + i * self.latent + j)
    }

    pub fn d3(&self, i: usize, j: usize, k: usize) -> &'a [S] {
        let m = self.latent;
        self.component(1 + m + m * m + (i * m + j) * m + k)
    }

    /// Jacobian `D x m`.
    pub fn jacobian(&self) -> Matrix<S> {
        Matrix::from_fn(self.ambient, self.latent, |o, i| self.d1(i)[o])
    }

    /// `∂_u J`: column `j` is `sum_i u_i ∂_i ∂_j f`.
    pub fn jacobian_derivative(&self, u: &[S]) -> Matrix<S> {
        Matrix::from_fn(self.ambient, self.latent, |o, j| {
            let mut acc = S::zero();
            for (i, &ui) in u.iter().enumerate() {
                acc += ui * self.d2(i, j)[o];
            }
            acc
        })
    }

    /// `∂_u ∂_v J`.
    pub fn jacobian_second_derivative(&self, u: &[S], v: &[S]) -> Matrix<S> {
        Matrix::from_fn(self.ambient, self.latent, |o, j| {
            let mut acc = S::zero();
            for (i, &ui) in u.iter().enumerate() {
                for (k, &vk) in v.iter().enumerate() {
                    acc += ui * vk * self.d3(i, k, j)[o];
                }
            }
            acc
        })
    }
}

impl LocalJet {
    pub fn view(&self) -> JetView<'_, f64> {
        JetView {
            latent: self.latent,
            ambient: self.ambient,
            order: self.order,
            coeffs: &self.coeffs,
        }
    }
}

fn permutations3(i: usize, j: usize, k: usize) -> [(usize, usize, usize); 6] {
    [
        (i, j, k),
        (i, k, j),
        (j, i, k),
        (j, k, i),
        (k, i, j),
        (k, j, i),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::programs::{Paraboloid, Sphere};

    #[test]
    fn paraboloid_jet() {
        let jet = LocalJet::from_program(&Paraboloid, &[0.5, -0.25], &[], 3).unwrap();
        assert_eq!(jet.value(), &[0.5, -0.25, 0.3125]);
        assert_eq!(jet.d1(0), &[1.0, 0.0, 1.0]);
        assert_eq!(jet.d1(1), &[0.0, 1.0, -0.5]);
        assert_eq!(jet.d2(0, 0), &[0.0, 0.0, 2.0]);
        assert_eq!(jet.d2(0, 1), &[0.0, 0.0, 0.0]);
        assert_eq!(jet.d3(0, 0, 0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn third_partials_are_symmetric() {
        let jet = LocalJet::from_program(&Sphere { radius: 1.0 }, &[0.7, 0.3], &[], 3).unwrap();
        for o in 0..3 {
            let a = jet.d3(0, 0, 1)[o];
            assert_eq!(a, jet.d3(0, 1, 0)[o]);
            assert_eq!(a, jet.d3(1, 0, 0)[o]);
        }
        // d^3/du^2 dv of sin u cos v = sin u sin v
        assert!((jet.d3(0, 0, 1)[0] - 0.7f64.sin() * 0.3f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn length_matches_order() {
        assert_eq!(jet_len(3, 2), 15);
        assert_eq!(jet_len(2, 2), 7);
        assert_eq!(jet_len(0, 5), 1);
        assert!(LocalJet::from_coeffs(2, 3, 1, vec![0.0; 8]).is_err());
    }
}
