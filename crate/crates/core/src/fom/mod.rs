//! Training a network of time against full-order residuals.

mod loss;
mod trainer;

pub use loss::{loss_data, loss_dis, loss_eqn, DetachedFactor};
pub use trainer::{fom_model, predict_fields, EpochGradient, FomTrainConfig, FomTrainer, LossReport, PhysicsMode};

use crate::error::Result;
use crate::fv::{Field, ResidualBundle, TransportProblem};
use crate::linalg::CsrMatrix;

/// Source of residuals and Jacobians for a chain of fields. Implemented
/// in-process by [`TransportProblem`] and remotely by the daemon client.
pub trait FomSolver {
    /// Residual bundles `R_k` (with `A_k`, `b_k`) for `k = 1..K`, step `k`
    /// using `dts[k - 1]`.
    fn residuals(&mut self, u_all: &[Field], dts: &[f64]) -> Result<Vec<ResidualBundle>>;

    /// The blocks `dR_k / dU_{k-1}` for `k = 1..K`.
    fn previous_jacobians(&mut self, u_all: &[Field], dts: &[f64], fd_eps: f64) -> Result<Vec<CsrMatrix>>;
}

impl FomSolver for TransportProblem {
    fn residuals(&mut self, u_all: &[Field], dts: &[f64]) -> Result<Vec<ResidualBundle>> {
        self.chain_residuals(u_all, dts)
    }

    fn previous_jacobians(&mut self, u_all: &[Field], dts: &[f64], fd_eps: f64) -> Result<Vec<CsrMatrix>> {
        crate::error::ensure_len("chain time steps", u_all.len().saturating_sub(1), dts.len())?;
        (1..u_all.len())
            .map(|k| self.previous_step_jacobian(&u_all[k - 1], &u_all[k], dts[k - 1], fd_eps))
            .collect()
    }
}

impl<T: FomSolver + ?Sized> FomSolver for &mut T {
    fn residuals(&mut self, u_all: &[Field], dts: &[f64]) -> Result<Vec<ResidualBundle>> {
        (**self).residuals(u_all, dts)
    }

    fn previous_jacobians(&mut self, u_all: &[Field], dts: &[f64], fd_eps: f64) -> Result<Vec<CsrMatrix>> {
        (**self).previous_jacobians(u_all, dts, fd_eps)
    }
}
