//! Structured-grid finite-volume transport solver.

mod assembly;
mod config;
mod field;
mod grid;
mod jacobian;
mod march;
pub mod operators;

pub use assembly::{
    assemble_step, assemble_with_dt, cfl_number, residual, step_budget, Budget, LinearSystem, ResidualBundle,
    MAX_COMPONENTS,
};
pub use config::{ConvectionScheme, DiffusionScheme, Linearization, TimeScheme, TransportConfig};
pub use field::Field;
pub use grid::{build_grid, Face, Grid, Neighbor};
pub use jacobian::{jacobian, BlockJacobian, JacobianBlock, JacobianMode, TransportProblem, DEFAULT_FD_EPS};
pub use march::{march, march_with};
