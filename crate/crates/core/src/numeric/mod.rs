//! Dense linear algebra, elementwise primitives, and the gradient tape.

mod eig;
pub mod gradcheck;
pub mod matrix;
pub mod tape;

pub use eig::{sym_eig, SymEig};
pub use matrix::{ComplexMatrix, Matrix};
pub use tape::{
    kl_divergence, l2_normalize, relu, softmax, softmax_rows, CVar, Gradients, MatrixPath, Tape,
    Var,
};
