use serde::{Deserialize, Serialize};

use super::assembly::{assemble_with_dt, cell_row, check_inputs, residual, ResidualBundle};
use super::{Field, Grid, TransportConfig};
use crate::error::{ensure_len, Error, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Diagonal blocks are the assembled `A`; sub-diagonal blocks come from
    /// local central differences of `b` and the convecting velocity.
    Analytic,
    /// Central differences of the full residual chain in every unknown.
    FiniteDifference,
}

pub const DEFAULT_FD_EPS: f64 = 1e-6;

/// Grid and transport parameters: everything needed to turn a sequence of
/// fields into residuals and Jacobians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportProblem {
    pub grid: Grid,
    pub config: TransportConfig,
}

/// One nonzero block `dR_row / dU_col` of a chained Jacobian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianBlock {
    pub row: usize,
    pub col: usize,
    pub matrix: CsrMatrix,
}

/// Block-sparse Jacobian of the residual chain `R_1, ..., R_K` with respect
/// to the fields `U_0, ..., U_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockJacobian {
    pub n_fields: usize,
    pub block_size: usize,
    pub blocks: Vec<JacobianBlock>,
}

impl BlockJacobian {
    pub fn block(&self, row: usize, col: usize) -> Option<&CsrMatrix> {
        self.blocks.iter().find(|b| b.row == row && b.col == col).map(|b| &b.matrix)
    }

    /// Columns of the nonzero blocks in block-row `row`, ascending.
    pub fn row_pattern(&self, row: usize) -> Vec<usize> {
        let mut cols: Vec<usize> = self.blocks.iter().filter(|b| b.row == row).map(|b| b.col).collect();
        cols.sort_unstable();
        cols
    }

    /// Pulls residual cotangents `w_k` (indexed like the residual rows,
    /// `w[k - 1]` for `R_k`) back to field cotangents `sum_k J_k^T w_k`.
    pub fn vjp(&self, w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        ensure_len("jacobian cotangent rows", self.n_fields.saturating_sub(1), w.len())?;
        let mut out = vec![vec![0.0; self.block_size]; self.n_fields];
        for b in &self.blocks {
            let g = b.matrix.matvec_transpose(&w[b.row - 1])?;
            for (o, v) in out[b.col].iter_mut().zip(g) {
                *o += v;
            }
        }
        Ok(out)
    }
}

impl TransportProblem {
    pub fn new(grid: Grid, config: TransportConfig) -> Result<Self> {
        config.validate()?;
        Ok(TransportProblem { grid, config })
    }

    /// Residual of the step `u_prev -> u_next` with lagged convecting velocity.
    pub fn step_residual(&self, u_prev: &Field, u_next: &Field, dt: f64) -> Result<ResidualBundle> {
        let sys = assemble_with_dt(&self.grid, &self.config, u_prev, u_prev, dt)?;
        residual(&sys, u_next)
    }

    /// Residuals `R_k` for `k = 1..K` of the chain `u_all[0..=K]`, where step
    /// `k` uses `dts[k - 1]`.
    pub fn chain_residuals(&self, u_all: &[Field], dts: &[f64]) -> Result<Vec<ResidualBundle>> {
        ensure_len("chain time steps", u_all.len().saturating_sub(1), dts.len())?;
        (1..u_all.len())
            .map(|k| {
                let mut bundle = self.step_residual(&u_all[k - 1], &u_all[k], dts[k - 1])?;
                bundle.step = k;
                Ok(bundle)
            })
            .collect()
    }

    /// `dR / dU^n` for one step, by central differences of the rows near each
    /// perturbed cell. Rows farther than two cells from the perturbation do
    /// not depend on it.
    pub fn previous_step_jacobian(&self, u_prev: &Field, u_next: &Field, dt: f64, fd_eps: f64) -> Result<CsrMatrix> {
        check_fd_eps(fd_eps)?;
        check_inputs(&self.grid, &self.config, u_prev, u_prev)?;
        u_next.check(&self.grid, u_prev.n_components)?;
        let n = self.grid.n_cells();
        let nc = u_prev.n_components;
        let mut triplets = Vec::new();
        let mut work = u_prev.clone();
        for c in 0..nc {
            for q in 0..n {
                let col = c * n + q;
                let orig = work.values[col];
                for p in self.grid.cells_near(q, 2) {
                    work.values[col] = orig + fd_eps;
                    let plus = cell_row(&self.grid, &self.config, &work, &work, dt, p);
                    work.values[col] = orig - fd_eps;
                    let minus = cell_row(&self.grid, &self.config, &work, &work, dt, p);
                    for cr in 0..nc {
                        let d = (plus.residual(u_next, cr, p) - minus.residual(u_next, cr, p)) / (2.0 * fd_eps);
                        if !d.is_finite() {
                            return Err(Error::NonFinite("finite-difference residual".into()));
                        }
                        if d != 0.0 {
                            triplets.push((cr * n + p, col, d));
                        }
                    }
                }
                work.values[col] = orig;
            }
        }
        CsrMatrix::from_triplets(n * nc, n * nc, &triplets)
    }

    /// Block Jacobian of the residual chain.
    pub fn chain_jacobian(&self, u_all: &[Field], dts: &[f64], mode: JacobianMode, fd_eps: f64) -> Result<BlockJacobian> {
        check_fd_eps(fd_eps)?;
        ensure_len("chain time steps", u_all.len().saturating_sub(1), dts.len())?;
        if u_all.len() < 2 {
            return Err(Error::invalid("a residual chain needs at least two fields"));
        }
        let block_size = u_all[0].len();
        let mut blocks = Vec::new();
        match mode {
            JacobianMode::Analytic => {
                for k in 1..u_all.len() {
                    let sys = assemble_with_dt(&self.grid, &self.config, &u_all[k - 1], &u_all[k - 1], dts[k - 1])?;
                    let sub = self.previous_step_jacobian(&u_all[k - 1], &u_all[k], dts[k - 1], fd_eps)?;
                    blocks.push(JacobianBlock { row: k, col: k - 1, matrix: sub });
                    blocks.push(JacobianBlock { row: k, col: k, matrix: sys.a });
                }
            }
            JacobianMode::FiniteDifference => {
                let k_rows = u_all.len() - 1;
                let mut trip: Vec<Vec<Vec<(usize, usize, f64)>>> = vec![vec![Vec::new(); u_all.len()]; k_rows];
                let mut work = u_all.to_vec();
                for j in 0..u_all.len() {
                    for e in 0..block_size {
                        let orig = work[j].values[e];
                        work[j].values[e] = orig + fd_eps;
                        let plus = self.chain_residuals(&work, dts)?;
                        work[j].values[e] = orig - fd_eps;
                        let minus = self.chain_residuals(&work, dts)?;
                        work[j].values[e] = orig;
                        for k in 0..k_rows {
                            for (i, (a, b)) in plus[k].r.iter().zip(&minus[k].r).enumerate() {
                                let d = (a - b) / (2.0 * fd_eps);
                                if !d.is_finite() {
                                    return Err(Error::NonFinite("finite-difference residual".into()));
                                }
                                if d != 0.0 {
                                    trip[k][j].push((i, e, d));
                                }
                            }
                        }
                    }
                }
                for (k, row) in trip.into_iter().enumerate() {
                    for (j, t) in row.into_iter().enumerate() {
                        if !t.is_empty() {
                            let matrix = CsrMatrix::from_triplets(block_size, block_size, &t)?;
                            blocks.push(JacobianBlock { row: k + 1, col: j, matrix });
                        }
                    }
                }
            }
        }
        Ok(BlockJacobian { n_fields: u_all.len(), block_size, blocks })
    }
}

fn check_fd_eps(fd_eps: f64) -> Result<()> {
    if fd_eps > 0.0 && fd_eps.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("fd_eps must be positive, got {fd_eps}")))
    }
}

/// Block Jacobian of the chain `u_all` with every step using `problem.config.dt`.
pub fn jacobian(problem: &TransportProblem, u_all: &[Field], mode: JacobianMode, fd_eps: f64) -> Result<BlockJacobian> {
    let dts = vec![problem.config.dt; u_all.len().saturating_sub(1)];
    problem.chain_jacobian(u_all, &dts, mode, fd_eps)
}
