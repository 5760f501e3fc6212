//! Reverse-mode differentiation on a thread-local Wengert tape.
//!
//! A [`Var`] is a primal value plus an index into the tape of the current
//! thread. Constants carry no index and are never recorded. The tape lives
//! for the duration of a single [`gradient`] call; nesting `gradient` calls
//! on one thread is rejected.

use std::cell::{Cell, RefCell};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Scalar;

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [(u32, f64); 2],
}

thread_local! {
    static TAPE: RefCell<Vec<Node>> = const { RefCell::new(Vec::new()) };
    static ACTIVE: Cell<bool> = const { Cell::new(false) };
}

#[derive(Clone, Copy, Debug)]
pub struct Var {
    idx: u32,
    val: f64,
}

impl Var {
    pub fn constant(val: f64) -> Self {
        Var { idx: NONE, val }
    }

    pub fn is_constant(&self) -> bool {
        self.idx == NONE
    }

    fn push(val: f64, a: (u32, f64), b: (u32, f64)) -> Self {
        if a.0 == NONE && b.0 == NONE {
            return Var::constant(val);
        }
        let idx = TAPE.with(|t| {
            let mut t = t.borrow_mut();
            t.push(Node { parents: [a, b] });
            (t.len() - 1) as u32
        });
        Var { idx, val }
    }

    fn unary(self, val: f64, d: f64) -> Self {
        Var::push(val, (self.idx, d), (NONE, 0.0))
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, o: Var) -> Var {
        Var::push(self.val + o.val, (self.idx, 1.0), (o.idx, 1.0))
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, o: Var) -> Var {
        Var::push(self.val - o.val, (self.idx, 1.0), (o.idx, -1.0))
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, o: Var) -> Var {
        Var::push(self.val * o.val, (self.idx, o.val), (o.idx, self.val))
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, o: Var) -> Var {
        let q = self.val / o.val;
        Var::push(q, (self.idx, 1.0 / o.val), (o.idx, -q / o.val))
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

impl AddAssign for Var {
    fn add_assign(&mut self, o: Var) {
        *self = *self + o;
    }
}

impl SubAssign for Var {
    fn sub_assign(&mut self, o: Var) {
        *self = *self - o;
    }
}

impl MulAssign for Var {
    fn mul_assign(&mut self, o: Var) {
        *self = *self * o;
    }
}

impl Scalar for Var {
    #[inline]
    fn from_f64(x: f64) -> Self {
        Var::constant(x)
    }

    #[inline]
    fn value(&self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn scale(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }

    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
}

struct ActiveGuard;

impl ActiveGuard {
    fn acquire() -> Self {
        ACTIVE.with(|a| {
            assert!(!a.get(), "nested reverse-mode gradient calls are not supported");
            a.set(true);
        });
        TAPE.with(|t| t.borrow_mut().clear());
        ActiveGuard
    }
}

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        TAPE.with(|t| t.borrow_mut().clear());
        ACTIVE.with(|a| a.set(false));
    }
}

/// Evaluate `f` at `x` and return its value together with the gradient.
pub fn gradient<F>(x: &[f64], f: F) -> (f64, Vec<f64>)
where
    F: FnOnce(&[Var]) -> Var,
{
    let (vals, grads) = vector_gradient(x, |v| vec![f(v)], &[1.0]);
    (vals[0], grads)
}

/// Evaluate a vector-valued `f` at `x` and pull the cotangent `u` back
/// through it: returns `(f(x), u^T df/dx)`.
pub fn vector_gradient<F>(x: &[f64], f: F, u: &[f64]) -> (Vec<f64>, Vec<f64>)
where
    F: FnOnce(&[Var]) -> Vec<Var>,
{
    let _guard = ActiveGuard::acquire();
    let leaves: Vec<Var> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            TAPE.with(|t| t.borrow_mut().push(Node { parents: [(NONE, 0.0); 2] }));
            Var { idx: i as u32, val: v }
        })
        .collect();
    let out = f(&leaves);
    assert_eq!(out.len(), u.len(), "cotangent length must match output length");
    let values: Vec<f64> = out.iter().map(|v| v.val).collect();
    let grad = TAPE.with(|t| {
        let t = t.borrow();
        let mut adj = vec![0.0; t.len()];
        for (o, &w) in out.iter().zip(u) {
            if o.idx != NONE {
                adj[o.idx as usize] += w;
            }
        }
        for i in (x.len()..t.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, d) in &t[i].parents {
                if p != NONE {
                    adj[p as usize] += a * d;
                }
            }
        }
        adj.truncate(x.len());
        adj
    });
    (values, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let (v, g) = gradient(&[3.0, 4.0], |x| x[0] * x[1] + x[0].exp());
        assert_eq!(v, 12.0 + 3f64.exp());
        assert_eq!(g, vec![4.0 + 3f64.exp(), 3.0]);
    }

    #[test]
    fn constants_are_not_recorded() {
        let (_, g) = gradient(&[2.0], |x| {
            let c = Var::constant(5.0) * Var::constant(2.0);
            assert!(c.is_constant());
            x[0] * c
        });
        assert_eq!(g, vec![10.0]);
    }

    #[test]
    fn unused_input_has_zero_gradient() {
        let (_, g) = gradient(&[1.0, 2.0], |x| x[1] / x[1].sqrt());
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 0.5 / 2f64.sqrt()).abs() < 1e-15);
    }
}
