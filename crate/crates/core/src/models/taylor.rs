//! Batched Taylor-jet propagation through an MLP.
//!
//! For `P` latent points the network carries, per layer, a `(P*C) x width`
//! array whose row `p*C + c` holds jet component `c` of point `p`. Inside
//! the network only one representative of each symmetric partial is stored
//! (`d_i d_j` with `i <= j`, `d_i d_j d_k` with `i <= j <= k`); outputs and
//! their adjoints use the full [`LocalJet`] order. Affine maps act on all
//! rows at once, with the offset added to value rows only; ELU acts
//! pointwise by the multivariate chain rule. The reverse pass returns
//! parameter gradients and the adjoint of the input points.

use ndarray::{s, Array2, ArrayView2};

use super::Mlp;
use crate::autodiff::{elu_derivatives, DiffProgram};
use crate::error::{Error, Result};
use crate::geometry::{jet_len, LocalJet};

/// Forward state kept for the reverse pass.
#[derive(Clone, Debug)]
pub struct JetTape {
    points: usize,
    latent: usize,
    order: usize,
    /// Input to each affine map, in symmetric storage.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
}

impl JetTape {
    pub fn points(&self) -> usize {
        self.points
    }

    /// Components per point in the full output layout.
    pub fn components(&self) -> usize {
        jet_len(self.order, self.latent)
    }
}

/// Row bookkeeping for symmetric storage.
struct Layout {
    m: usize,
    order: usize,
    /// Stored components per point.
    stored: usize,
    pairs: Vec<(usize, usize, usize)>,
    triples: Vec<(usize, usize, usize, usize)>,
    pair_row: Vec<usize>,
    /// Stored row of each full-layout component.
    full_to_stored: Vec<usize>,
}

impl Layout {
    fn new(m: usize, order: usize) -> Self {
        let mut next = 1 + if order >= 1 { m } else { 0 };
        let mut pair_row = vec![0; m * m];
        let mut pairs = Vec::new();
        if order >= 2 {
            for i in 0..m {
                for j in i..m {
                    pairs.push((i, j, next));
                    pair_row[i * m + j] = next;
                    pair_row[j * m + i] = next;
                    next += 1;
                }
            }
        }
        let mut triple_row = vec![0; m * m * m];
        let mut triples = Vec::new();
        if order >= 3 {
            for i in 0..m {
                for j in i..m {
                    for l in j..m {
                        triples.push((i, j, l, next));
                        for (a, b, c) in [(i, j, l), (i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)] {
                            triple_row[(a * m + b) * m + c] = next;
                        }
                        next += 1;
                    }
                }
            }
        }
        let mut full_to_stored = vec![0];
        if order >= 1 {
            full_to_stored.extend(1..=m);
        }
        if order >= 2 {
            full_to_stored.extend_from_slice(&pair_row);
        }
        if order >= 3 {
            full_to_stored.extend_from_slice(&triple_row);
        }
        Layout {
            m,
            order,
            stored: next,
            pairs,
            triples,
            pair_row,
            full_to_stored,
        }
    }

    fn pair(&self, i: usize, j: usize) -> usize {
        self.pair_row[i * self.m + j]
    }
}

fn weights<'a>(mlp: &Mlp, params: &'a [f64], layer: usize) -> (ArrayView2<'a, f64>, &'a [f64]) {
    let (off, n_in, n_out) = mlp.layer_layout(layer);
    let w = ArrayView2::from_shape((n_out, n_in), &params[off..off + n_out * n_in]).expect("layer shape");
    let b = &params[off + n_out * n_in..off + n_out * n_in + n_out];
    (w, b)
}

/// Propagate jets of the given order at `points` (a `P x m` array) and
/// return the `(P*K) x D` output jets in [`LocalJet`] order with the tape.
pub fn forward(mlp: &Mlp, params: &[f64], points: ArrayView2<'_, f64>, order: usize) -> Result<(Array2<f64>, JetTape)> {
    if order > 3 {
        return Err(Error::InvalidSpec(format!("jet order {order} exceeds 3")));
    }
    crate::error::check_dim("network parameters", mlp.param_count(), params.len())?;
    let (p, m) = points.dim();
    crate::error::check_dim("network input", mlp.input_dim(), m)?;
    let lay = Layout::new(m, order);
    let k = lay.stored;
    let mut a = Array2::<f64>::zeros((p * k, m));
    for i in 0..p {
        a.row_mut(i * k).assign(&points.row(i));
        if order >= 1 {
            for c in 0..m {
                a[[i * k + 1 + c, c]] = 1.0;
            }
        }
    }
    let layers = mlp.layers();
    let mut inputs = Vec::with_capacity(layers);
    let mut pre = Vec::with_capacity(layers - 1);
    for l in 0..layers {
        let (w, b) = weights(mlp, params, l);
        let mut x = a.dot(&w.t());
        for i in 0..p {
            x.row_mut(i * k).iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
        }
        inputs.push(a);
        if l + 1 < layers {
            a = activate(&lay, &x, p);
            pre.push(x);
        } else {
            a = x;
        }
    }
    let full = lay.full_to_stored.len();
    let d = a.ncols();
    let mut out = Array2::<f64>::zeros((p * full, d));
    for i in 0..p {
        for (f, &st) in lay.full_to_stored.iter().enumerate() {
            out.row_mut(i * full + f).assign(&a.row(i * k + st));
        }
    }
    Ok((
        out,
        JetTape {
            points: p,
            latent: m,
            order,
            inputs,
            pre,
        },
    ))
}

/// Reverse pass: given the adjoint of the output jets (full layout), return
/// the parameter gradient and the `P x m` adjoint of the input points.
pub fn backward(mlp: &Mlp, params: &[f64], tape: &JetTape, out_bar: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let lay = Layout::new(tape.latent, tape.order);
    let layers = mlp.layers();
    let (k, full) = (lay.stored, lay.full_to_stored.len());
    let mut ybar = Array2::<f64>::zeros((tape.points * k, out_bar.ncols()));
    for i in 0..tape.points {
        for (f, &st) in lay.full_to_stored.iter().enumerate() {
            let mut row = ybar.row_mut(i * k + st);
            row += &out_bar.row(i * full + f);
        }
    }
    let mut grad = vec![0.0; mlp.param_count()];
    for l in (0..layers).rev() {
        let (w, _) = weights(mlp, params, l);
        let (off, n_in, n_out) = mlp.layer_layout(l);
        let xbar = if l + 1 < layers {
            activate_backward(&lay, &tape.pre[l], &ybar, tape.points)
        } else {
            ybar
        };
        let gw = xbar.t().dot(&tape.inputs[l]);
        grad[off..off + n_out * n_in].copy_from_slice(gw.as_standard_layout().as_slice().expect("contiguous"));
        let gb = &mut grad[off + n_out * n_in..off + n_out * n_in + n_out];
        for i in 0..tape.points {
            gb.iter_mut().zip(xbar.row(i * k)).for_each(|(g, x)| *g += x);
        }
        ybar = xbar.dot(&w);
    }
    let mut zbar = Array2::<f64>::zeros((tape.points, tape.latent));
    for i in 0..tape.points {
        zbar.row_mut(i).assign(&ybar.row(i * k));
    }
    (grad, zbar)
}

/// Split `(P*K) x D` output jets into per-point [`LocalJet`]s.
pub fn to_local_jets(out: &Array2<f64>, latent: usize, order: usize) -> Result<Vec<LocalJet>> {
    let k = jet_len(order, latent);
    let d = out.ncols();
    (0..out.nrows() / k)
        .map(|i| {
            let block = out.slice(s![i * k..(i + 1) * k, ..]);
            LocalJet::from_coeffs(latent, d, order, block.iter().copied().collect())
        })
        .collect()
}

/// ELU derivatives `s[0..n]` of every entry of a row.
fn elu_rows(x: &[f64], s: &mut [Vec<f64>], n: usize) {
    for (c, &v) in x.iter().enumerate() {
        let d = elu_derivatives(v);
        for (q, sq) in s.iter_mut().take(n).enumerate() {
            sq[c] = d[q];
        }
    }
}

/// `dst[c] op expr` for every column `c`, with the named rows bound to
/// their entries at `c`. All rows are cut to the same width first so the
/// loop compiles without bounds checks.
macro_rules! rowwise {
    ($w:expr, $dst:expr, $op:tt, [$($r:ident),*], $e:expr) => {{
        let w = $w;
        let dst = &mut $dst[..w];
        $(let $r = &$r[..w];)*
        for c in 0..w {
            $(let $r = $r[c];)*
            dst[c] $op $e;
        }
    }};
}

fn activate(lay: &Layout, x: &Array2<f64>, points: usize) -> Array2<f64> {
    let k = lay.stored;
    let w = x.ncols();
    let mut y = Array2::<f64>::zeros(x.raw_dim());
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("contiguous");
    let ys = y.as_slice_mut().expect("contiguous");
    let mut s = vec![vec![0.0; w]; 4];
    for p in 0..points {
        let xb = &xs[p * k * w..(p + 1) * k * w];
        let yb = &mut ys[p * k * w..(p + 1) * k * w];
        let row = |r: usize| &xb[r * w..(r + 1) * w];
        elu_rows(row(0), &mut s, 1 + lay.order.min(3));
        let (s1, s2, s3) = (&s[1], &s[2], &s[3]);
        yb[..w].copy_from_slice(&s[0]);
        if lay.order >= 1 {
            for i in 0..lay.m {
                let xi = row(1 + i);
                rowwise!(w, yb[(1 + i) * w..], =, [s1, xi], s1 * xi);
            }
        }
        for &(i, j, r) in &lay.pairs {
            let (xi, xj, xij) = (row(1 + i), row(1 + j), row(r));
            rowwise!(w, yb[r * w..], =, [s1, s2, xi, xj, xij], s2 * xi * xj + s1 * xij);
        }
        for &(i, j, l, r) in &lay.triples {
            let (xi, xj, xl) = (row(1 + i), row(1 + j), row(1 + l));
            let (xij, xil, xjl) = (row(lay.pair(i, j)), row(lay.pair(i, l)), row(lay.pair(j, l)));
            let xijl = row(r);
            rowwise!(
                w,
                yb[r * w..],
                =,
                [s1, s2, s3, xi, xj, xl, xij, xil, xjl, xijl],
                s3 * xi * xj * xl + s2 * (xij * xl + xil * xj + xjl * xi) + s1 * xijl
            );
        }
    }
    y
}

fn activate_backward(lay: &Layout, x: &Array2<f64>, ybar: &Array2<f64>, points: usize) -> Array2<f64> {
    let k = lay.stored;
    let w = x.ncols();
    let mut xbar = Array2::<f64>::zeros(x.raw_dim());
    let (x, ybar) = (x.as_standard_layout(), ybar.as_standard_layout());
    let xs = x.as_slice().expect("contiguous");
    let ybs = ybar.as_slice().expect("contiguous");
    let xbs = xbar.as_slice_mut().expect("contiguous");
    let mut s = vec![vec![0.0; w]; 5];
    // g * s2 and g * s3 of the current component
    let mut t2 = vec![0.0; w];
    let mut t3 = vec![0.0; w];
    for p in 0..points {
        let range = p * k * w..(p + 1) * k * w;
        let (xp, gp, bp) = (&xs[range.clone()], &ybs[range.clone()], &mut xbs[range]);
        let row = |r: usize| &xp[r * w..(r + 1) * w];
        let grow = |r: usize| &gp[r * w..(r + 1) * w];
        elu_rows(row(0), &mut s, 2 + lay.order.min(3));
        let (s1, s2, s3, s4) = (&s[1], &s[2], &s[3], &s[4]);
        for &(i, j, l, r) in &lay.triples {
            let g = grow(r);
            let (xi, xj, xl) = (row(1 + i), row(1 + j), row(1 + l));
            let (ij, il, jl) = (lay.pair(i, j), lay.pair(i, l), lay.pair(j, l));
            let (xij, xil, xjl, xijl) = (row(ij), row(il), row(jl), row(r));
            rowwise!(w, t2, =, [g, s2], g * s2);
            rowwise!(w, t3, =, [g, s3], g * s3);
            let (a2, a3) = (&t2, &t3);
            rowwise!(
                w,
                bp,
                +=,
                [g, s4, a2, a3, xi, xj, xl, xij, xil, xjl, xijl],
                g * s4 * xi * xj * xl + a3 * (xij * xl + xil * xj + xjl * xi) + a2 * xijl
            );
            rowwise!(w, bp[(1 + i) * w..], +=, [a2, a3, xj, xl, xjl], a3 * xj * xl + a2 * xjl);
            rowwise!(w, bp[(1 + j) * w..], +=, [a2, a3, xi, xl, xil], a3 * xi * xl + a2 * xil);
            rowwise!(w, bp[(1 + l) * w..], +=, [a2, a3, xi, xj, xij], a3 * xi * xj + a2 * xij);
            rowwise!(w, bp[ij * w..], +=, [a2, xl], a2 * xl);
            rowwise!(w, bp[il * w..], +=, [a2, xj], a2 * xj);
            rowwise!(w, bp[jl * w..], +=, [a2, xi], a2 * xi);
            rowwise!(w, bp[r * w..], +=, [g, s1], g * s1);
        }
        for &(i, j, r) in &lay.pairs {
            let g = grow(r);
            let (xi, xj, xij) = (row(1 + i), row(1 + j), row(r));
            rowwise!(w, t2, =, [g, s2], g * s2);
            let a2 = &t2;
            rowwise!(w, bp, +=, [g, s3, a2, xi, xj, xij], g * s3 * xi * xj + a2 * xij);
            rowwise!(w, bp[(1 + i) * w..], +=, [a2, xj], a2 * xj);
            rowwise!(w, bp[(1 + j) * w..], +=, [a2, xi], a2 * xi);
            rowwise!(w, bp[r * w..], +=, [g, s1], g * s1);
        }
        if lay.order >= 1 {
            for i in 0..lay.m {
                let (g, xi) = (grow(1 + i), row(1 + i));
                rowwise!(w, bp, +=, [g, s2, xi], g * s2 * xi);
                rowwise!(w, bp[(1 + i) * w..], +=, [g, s1], g * s1);
            }
        }
        let g = grow(0);
        rowwise!(w, bp, +=, [g, s1], g * s1);
    }
    xbar
}
