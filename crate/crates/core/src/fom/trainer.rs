use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::loss::{loss_data, loss_eqn, DetachedFactor};
use super::FomSolver;
use crate::error::{Error, Result};
use crate::fv::{BlockJacobian, Field, JacobianBlock, DEFAULT_FD_EPS};
use crate::linalg::CsrMatrix;
use crate::nn::{adam_step, Activation, AdamState, Affine, MlpParams, Model};

/// Which physics gradient drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicsMode {
    /// `[2 R J]_detached U` with `J = [dR/dU^n, A]`, `dR/dU^n` refreshed every `k_int` epochs.
    Corrected,
    /// `[2 R A]_detached U`: the dependence of `A` and `b` on `U^n` is ignored.
    Uncorrected,
    /// Data loss only; the physics loss is still evaluated for monitoring.
    DataOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FomTrainConfig {
    /// Weight of the physics term.
    pub lambda1: f64,
    /// Weight of the data term.
    pub lambda2: f64,
    pub k_int: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Benchmark snapshot indices used by the data loss.
    pub data_indices: Vec<usize>,
    /// Benchmark snapshot indices of the physics chain. A residual is
    /// evaluated at every entry after the first, against its predecessor.
    pub physics_indices: Vec<usize>,
    pub mode: PhysicsMode,
    pub fd_eps: f64,
}

impl Default for FomTrainConfig {
    fn default() -> Self {
        FomTrainConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            k_int: 20,
            epochs: 3999,
            learning_rate: 0.006,
            data_indices: vec![0],
            physics_indices: (0..=200).step_by(10).collect(),
            mode: PhysicsMode::Corrected,
            fd_eps: DEFAULT_FD_EPS,
        }
    }
}

impl FomTrainConfig {
    pub fn validate(&self, n_snapshots: usize) -> Result<()> {
        if self.k_int == 0 {
            return Err(Error::invalid("k_int must be at least 1"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if !(self.fd_eps > 0.0) {
            return Err(Error::invalid("fd_eps must be positive"));
        }
        if let Some(&i) = self.data_indices.iter().chain(&self.physics_indices).find(|&&i| i >= n_snapshots) {
            return Err(Error::invalid(format!("snapshot index {i} outside a benchmark of {n_snapshots}")));
        }
        if self.mode != PhysicsMode::DataOnly {
            if self.physics_indices.len() < 2 {
                return Err(Error::invalid("the physics chain needs at least two instants"));
            }
            if self.physics_indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("physics indices must be strictly increasing"));
            }
        }
        Ok(())
    }
}

/// Losses of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub l_data: f64,
    pub l_eqn: f64,
    pub l_dis: f64,
    pub total: f64,
    pub wall_time: f64,
}

/// Network mapping time to a full field: `[1, hidden..., n_outputs]`, time
/// normalized onto `[0, 1]` over `[t0, t1]`, identity output scaling.
pub fn fom_model(hidden: &[usize], activation: Activation, seed: u64, n_outputs: usize, t0: f64, t1: f64) -> Result<Model> {
    let sizes: Vec<usize> = std::iter::once(1).chain(hidden.iter().copied()).chain([n_outputs]).collect();
    let net = MlpParams::glorot(&sizes, activation, seed)?;
    Model::new(net, Affine::unit_interval(t0, t1)?, Affine::identity(n_outputs), seed)
}

/// One epoch's losses and parameter gradient, before the optimizer update.
#[derive(Debug, Clone)]
pub struct EpochGradient {
    pub report: LossReport,
    pub grad: Vec<f64>,
    /// Gradient of the physics term alone.
    pub physics_grad: Vec<f64>,
}

/// Full-batch trainer: a network of time, data rows from a benchmark, and
/// physics rows whose residuals come from an external solver.
pub struct FomTrainer<S: FomSolver> {
    cfg: FomTrainConfig,
    solver: S,
    model: Model,
    adam: AdamState,
    template: Field,
    times: Vec<f64>,
    data: Vec<(usize, Vec<f64>)>,
    chain: Vec<usize>,
    dts: Vec<f64>,
    cached: Option<Vec<CsrMatrix>>,
    epoch: usize,
}

impl<S: FomSolver> FomTrainer<S> {
    pub fn new(cfg: FomTrainConfig, model: Model, benchmark: &[Field], solver: S) -> Result<Self> {
        cfg.validate(benchmark.len())?;
        let template = benchmark.first().ok_or_else(|| Error::invalid("empty benchmark"))?.clone();
        if model.net.input_dim() != 1 || model.net.output_dim() != template.len() {
            return Err(Error::invalid(format!(
                "network maps {} -> {}, expected 1 -> {}",
                model.net.input_dim(),
                model.net.output_dim(),
                template.len()
            )));
        }
        let physics: &[usize] = if cfg.mode == PhysicsMode::DataOnly && cfg.physics_indices.len() < 2 {
            &[]
        } else {
            &cfg.physics_indices
        };
        let mut snaps: Vec<usize> = cfg.data_indices.iter().chain(physics).copied().collect();
        snaps.sort_unstable();
        snaps.dedup();
        let times: Vec<f64> = snaps.iter().map(|&i| benchmark[i].time).collect();
        let row_of = |i: usize| snaps.binary_search(&i).expect("index collected above");
        let data = cfg.data_indices.iter().map(|&i| (row_of(i), benchmark[i].values.clone())).collect();
        let chain: Vec<usize> = physics.iter().map(|&i| row_of(i)).collect();
        let dts = chain.windows(2).map(|w| times[w[1]] - times[w[0]]).collect();
        let adam = AdamState::new(model.net.n_params(), cfg.learning_rate);
        Ok(FomTrainer { cfg, solver, model, adam, template, times, data, chain, dts, cached: None, epoch: 0 })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn solver_mut(&mut self) -> &mut S {
        &mut self.solver
    }

    /// Times of the network rows, ascending.
    pub fn row_times(&self) -> &[f64] {
        &self.times
    }

    /// Rows of the physics chain.
    pub fn chain_rows(&self) -> &[usize] {
        &self.chain
    }

    pub fn chain_dts(&self) -> &[f64] {
        &self.dts
    }

    /// Predicted fields at arbitrary times.
    pub fn predict(&self, times: &[f64]) -> Result<Vec<Field>> {
        predict_fields(&self.model, &self.template, times)
    }

    /// Physics loss `L_eqn` of an arbitrary model on this trainer's chain.
    pub fn physics_loss(&mut self, model: &Model) -> Result<f64> {
        let times: Vec<f64> = self.chain.iter().map(|&r| self.times[r]).collect();
        let fields = predict_fields(model, &self.template, &times)?;
        let bundles = self.solver.residuals(&fields, &self.dts)?;
        Ok(loss_eqn(&bundles.into_iter().map(|b| b.r).collect::<Vec<_>>()))
    }

    /// Losses and gradient at the current parameters. Refreshes the cached
    /// `dR/dU^n` blocks when the epoch is a multiple of `k_int`.
    pub fn gradient(&mut self) -> Result<EpochGradient> {
        let start = Instant::now();
        let pass = self.model.predict(&self.times)?;
        let width = self.template.len();
        let rows: Vec<Vec<f64>> = pass.outputs.chunks(width).map(<[f64]>::to_vec).collect();
        let mut cot = vec![0.0; pass.outputs.len()];

        let data_rows: Vec<usize> = self.data.iter().map(|(r, _)| *r).collect();
        let mut actual = vec![Vec::new(); rows.len()];
        for (r, target) in &self.data {
            actual[*r] = target.clone();
        }
        let l_data = loss_data(&rows, &actual, &data_rows)?;
        if !data_rows.is_empty() {
            let n = (data_rows.len() * width) as f64;
            for &r in &data_rows {
                for k in 0..width {
                    cot[r * width + k] += self.cfg.lambda2 * 2.0 * (rows[r][k] - actual[r][k]) / n;
                }
            }
        }

        let (mut l_eqn, mut l_dis) = (0.0, 0.0);
        let mut physics_cot = vec![0.0; pass.outputs.len()];
        if self.chain.len() >= 2 {
            let fields: Vec<Field> = self
                .chain
                .iter()
                .map(|&r| {
                    let mut f = self.template.clone();
                    f.values.copy_from_slice(&rows[r]);
                    f.time = self.times[r];
                    f
                })
                .collect();
            let bundles = self.solver.residuals(&fields, &self.dts)?;
            let residuals: Vec<Vec<f64>> = bundles.iter().map(|b| b.r.clone()).collect();
            l_eqn = loss_eqn(&residuals);
            if self.cfg.mode != PhysicsMode::DataOnly {
                if self.cfg.mode == PhysicsMode::Corrected && (self.cached.is_none() || self.epoch % self.cfg.k_int == 0) {
                    self.cached = Some(self.solver.previous_jacobians(&fields, &self.dts, self.cfg.fd_eps)?);
                }
                let mut blocks = Vec::with_capacity(2 * bundles.len());
                for (k, b) in bundles.into_iter().enumerate() {
                    if let Some(sub) = self.cached.as_ref().filter(|_| self.cfg.mode == PhysicsMode::Corrected) {
                        blocks.push(JacobianBlock { row: k + 1, col: k, matrix: sub[k].clone() });
                    }
                    blocks.push(JacobianBlock { row: k + 1, col: k + 1, matrix: b.system.a });
                }
                let jac = BlockJacobian { n_fields: fields.len(), block_size: width, blocks };
                let factor = DetachedFactor::new(&residuals, &jac)?;
                let chain_values: Vec<Vec<f64>> = self.chain.iter().map(|&r| rows[r].clone()).collect();
                l_dis = factor.value(&chain_values)?;
                for (j, &r) in self.chain.iter().enumerate() {
                    for k in 0..width {
                        physics_cot[r * width + k] += self.cfg.lambda1 * factor.coeff[j][k];
                    }
                }
            }
        }
        for (c, p) in cot.iter_mut().zip(&physics_cot) {
            *c += p;
        }
        let grad = self.model.backward(&pass, &cot, None)?;
        let physics_grad = self.model.backward(&pass, &physics_cot, None)?;
        let total = match self.cfg.mode {
            PhysicsMode::DataOnly => self.cfg.lambda2 * l_data,
            _ => self.cfg.lambda1 * l_dis + self.cfg.lambda2 * l_data,
        };
        let report = LossReport {
            epoch: self.epoch,
            l_data,
            l_eqn,
            l_dis,
            total,
            wall_time: start.elapsed().as_secs_f64(),
        };
        if ![l_data, l_eqn, l_dis, total].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("loss at epoch {}", self.epoch)));
        }
        Ok(EpochGradient { report, grad, physics_grad })
    }

    /// One Adam step. Errors carry the epoch number.
    pub fn step(&mut self) -> Result<LossReport> {
        let epoch = self.epoch;
        let wrap = |e: Error| Error::Training { epoch, source: Box::new(e) };
        let start = Instant::now();
        let g = self.gradient().map_err(wrap)?;
        self.apply(&g).map_err(wrap)?;
        let mut report = g.report;
        report.wall_time = start.elapsed().as_secs_f64();
        Ok(report)
    }

    /// Applies a gradient from [`FomTrainer::gradient`] and advances the epoch.
    pub fn apply(&mut self, g: &EpochGradient) -> Result<()> {
        adam_step(&mut self.adam, &mut self.model.net, &g.grad)?;
        self.epoch += 1;
        Ok(())
    }

    /// Runs the configured number of epochs, calling `hook` after each.
    pub fn run(&mut self, mut hook: impl FnMut(&LossReport, &Model) -> Result<()>) -> Result<Vec<LossReport>> {
        let mut reports = Vec::with_capacity(self.cfg.epochs);
        while self.epoch < self.cfg.epochs {
            let r = self.step()?;
            hook(&r, &self.model)?;
            reports.push(r);
        }
        Ok(reports)
    }
}

/// Evaluates a time-to-field model at `times`, shaped like `template`.
pub fn predict_fields(model: &Model, template: &Field, times: &[f64]) -> Result<Vec<Field>> {
    let pass = model.predict(times)?;
    Ok(pass
        .outputs
        .chunks(template.len())
        .zip(times)
        .map(|(v, &t)| {
            let mut f = template.clone();
            f.values.copy_from_slice(v);
            f.time = t;
            f
        })
        .collect())
}
