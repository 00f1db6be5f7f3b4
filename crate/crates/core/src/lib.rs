//! Discretized physics-informed neural network training against an external
//! finite-volume solver.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: sparse/dense kernels, BiCGStab and a Jacobi eigensolver.
//! - [`fv`]: structured-grid finite-volume transport solver producing the
//!   per-step linear systems `A U = b`, residuals and Jacobians.
//! - [`nn`]: a fully-connected network with reverse-mode parameter gradients,
//!   forward-mode input tangents and Adam.
//! - [`fom`]: training a network against full-order residuals with the
//!   detached-Jacobian corrected loss.
//! - [`pod`]: POD bases, Galerkin-projected operators and the reduced ODE.
//! - [`rom`]: training a network against reduced residuals.
//! - [`daemon`]: the solver as a separate process behind a framed protocol.
//! - [`io`]: snapshot files and error metrics.

pub mod error;
pub mod daemon;
pub mod experiments;
pub mod fom;
pub mod fv;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod pod;
pub mod rom;

pub use error::{Error, Result};

/// The guide under `book/`, compiled so its code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/reduced.md")]
    mod reduced {}
    #[doc = include_str!("../../../book/src/daemon.md")]
    mod daemon {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
