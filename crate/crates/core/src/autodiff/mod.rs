//! Automatic differentiation engine.
//!
//! Programs are written once against the [`Scalar`] trait. Forward mode comes
//! from [`Dual`], which nests (`Dual<Dual<Dual<f64>>>` carries three
//! independent directions), and reverse mode from the tape-backed [`Var`].
//! Because `Dual<Var>` is itself a `Scalar`, any stack of directional
//! derivatives can be finished with one adjoint pass over parameters.

mod dual;
mod matrix;
mod program;
mod scalar;
pub mod tape;

pub use dual::{lift, primals, seed, tangents, Dual};
pub use matrix::{
    dot, inverse_spd, solve_spd, DenseMatrix, Matrix, SpdFactor, JITTER_REL, MAX_SPD_DIM,
    SYMMETRY_TOL,
};
pub(crate) use program::{check_args, jacobian_generic};
pub use program::{evaluate, jacobian, jvp, param_gradient, vjp, Compose, DiffProgram, Jvp};
pub use scalar::{elu_derivatives, Scalar};
pub use tape::{gradient, vector_gradient, Var};
