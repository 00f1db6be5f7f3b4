//! Dense and sparse kernels shared by the solver, the reduced models and the
//! network: compressed-row matrices, a Jacobi-preconditioned BiCGStab, small
//! dense algebra and a cyclic Jacobi symmetric eigensolver.

mod dense;
mod eigen;
mod solve;
mod sparse;
mod tensor;

pub use dense::{gemm, DenseMatrix, Transpose};
pub use eigen::{jacobi_eigen, sym_eig, SymEigen};
pub use solve::{solve_sparse, SolveStats, SolverOptions};
pub use sparse::CsrMatrix;
pub use tensor::Tensor3;

/// Infinity norm of a vector.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
