//! Training a network of `(t, nu)` against reduced residuals.

mod solver;
mod trainer;

pub use solver::{ReducedEval, ReducedJacobian, ReducedSolver, ReducedSystemSet};
pub use trainer::{predict, rom_model, RomGradient, RomPrediction, RomRow, RomTrainConfig, RomTrainer};
