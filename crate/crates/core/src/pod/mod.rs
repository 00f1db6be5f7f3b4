//! POD bases, Galerkin-projected reduced operators and the reduced ODE.

mod basis;
mod reduced;

pub use basis::{pod, weighted_inner, PodBasis, SnapshotSet};
pub use reduced::{
    project_operators, reduced_residuals, reduced_rhs, rom_march, ReducedJacobianMode, ReducedState, ReducedSystem,
    ROM_MAX_ITERATIONS, ROM_TOLERANCE,
};
