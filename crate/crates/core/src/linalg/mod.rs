//! Small linear-algebra toolbox: CSR storage, matrix-free Krylov solvers and
//! dense eigenvalue helpers for the verification paths.

pub mod dense;
pub mod iterative;
pub mod sparse;

pub use iterative::{cg_jacobi, fgmres, LinOp};
pub use sparse::CsrMatrix;
