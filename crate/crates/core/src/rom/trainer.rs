use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ReducedJacobian, ReducedSolver};
use crate::error::{ensure_len, Error, Result};
use crate::fom::{LossReport, PhysicsMode};
use crate::fv::DEFAULT_FD_EPS;
use crate::nn::{adam_step, Activation, AdamState, Affine, MlpParams, Model};
use crate::pod::ReducedState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomTrainConfig {
    /// Weight of the momentum term.
    pub lambda1: f64,
    /// Weight of the constraint term.
    pub lambda2: f64,
    /// Weight of the data term.
    pub lambda3: f64,
    pub k_int: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `Uncorrected` keeps only the `a'` path of the momentum residual.
    pub mode: PhysicsMode,
    pub fd_eps: f64,
}

impl Default for RomTrainConfig {
    fn default() -> Self {
        RomTrainConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            k_int: 20,
            epochs: 5000,
            learning_rate: 0.001,
            mode: PhysicsMode::Corrected,
            fd_eps: DEFAULT_FD_EPS,
        }
    }
}

impl RomTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_int == 0 {
            return Err(Error::invalid("k_int must be at least 1"));
        }
        if ![self.lambda1, self.lambda2, self.lambda3].iter().all(|l| *l >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if !(self.fd_eps > 0.0) {
            return Err(Error::invalid("fd_eps must be positive"));
        }
        Ok(())
    }
}

/// One network input row: `(t, nu)`, an optional target `Q = [a | b]` in
/// physical units, and whether the reduced residual is enforced there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RomRow {
    pub time: f64,
    pub nu: f64,
    pub target: Option<Vec<f64>>,
    pub physics: bool,
}

/// Network `(t, nu) -> Q` with both inputs mapped onto `[0, 1]` and outputs
/// standardized by `output`.
pub fn rom_model(
    hidden: &[usize],
    activation: Activation,
    seed: u64,
    t_range: (f64, f64),
    nu_range: (f64, f64),
    output: Affine,
) -> Result<Model> {
    let sizes: Vec<usize> = [2].into_iter().chain(hidden.iter().copied()).chain([output.dim()]).collect();
    let net = MlpParams::glorot(&sizes, activation, seed)?;
    let input = Affine::concat(&[Affine::unit_interval(t_range.0, t_range.1)?, Affine::unit_interval(nu_range.0, nu_range.1)?]);
    Model::new(net, input, output, seed)
}

/// Predicted coefficients and their time derivatives, physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct RomPrediction {
    pub q: Vec<Vec<f64>>,
    pub a_dot: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RomGradient {
    pub report: LossReport,
    pub l_eqn_mom: f64,
    pub l_eqn_pressure: f64,
    pub grad: Vec<f64>,
    pub physics_grad: Vec<f64>,
}

/// Full-batch trainer for the reduced coefficients.
pub struct RomTrainer<S: ReducedSolver> {
    cfg: RomTrainConfig,
    solver: S,
    model: Model,
    adam: AdamState,
    rows: Vec<RomRow>,
    n_u: usize,
    cached: Option<Vec<ReducedJacobian>>,
    epoch: usize,
}

impl<S: ReducedSolver> RomTrainer<S> {
    /// `n_u` is the number of velocity coefficients; the remaining network
    /// outputs are pressure coefficients.
    pub fn new(cfg: RomTrainConfig, model: Model, rows: Vec<RomRow>, n_u: usize, solver: S) -> Result<Self> {
        cfg.validate()?;
        let nq = model.net.output_dim();
        if model.net.input_dim() != 2 || n_u == 0 || n_u > nq {
            return Err(Error::invalid(format!("network maps {} -> {nq}, expected 2 -> {n_u}+", model.net.input_dim())));
        }
        for r in &rows {
            if let Some(t) = &r.target {
                ensure_len("row target", nq, t.len())?;
            }
        }
        if rows.is_empty() {
            return Err(Error::invalid("no training rows"));
        }
        let adam = AdamState::new(model.net.n_params(), cfg.learning_rate);
        Ok(RomTrainer { cfg, solver, model, adam, rows, n_u, cached: None, epoch: 0 })
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

    pub fn rows(&self) -> &[RomRow] {
        &self.rows
    }

    pub fn solver_mut(&mut self) -> &mut S {
        &mut self.solver
    }

    fn physics_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&r| self.rows[r].physics).collect()
    }

    /// Momentum and constraint losses of an arbitrary model on the physics rows.
    pub fn physics_loss(&mut self, model: &Model) -> Result<(f64, f64)> {
        let rows: Vec<usize> = self.physics_rows();
        let pts: Vec<(f64, f64)> = rows.iter().map(|&r| (self.rows[r].time, self.rows[r].nu)).collect();
        let pred = predict(model, &pts)?;
        let states = states(&pred.q, &pts, self.n_u);
        let evals = self.solver.evaluate(&states)?;
        let mut sums = (0.0, 0.0);
        let mut counts = (0usize, 0usize);
        for (k, e) in evals.iter().enumerate() {
            for (d, x) in pred.a_dot[k].iter().zip(&e.x) {
                sums.0 += (d - x).powi(2);
            }
            sums.1 += e.constraint.iter().map(|v| v * v).sum::<f64>();
            counts.0 += e.x.len();
            counts.1 += e.constraint.len();
        }
        Ok((sums.0 / counts.0.max(1) as f64, sums.1 / counts.1.max(1) as f64))
    }

    /// Losses and gradient at the current parameters.
    pub fn gradient(&mut self) -> Result<RomGradient> {
        let start = Instant::now();
        let nq = self.model.net.output_dim();
        let nu_ = self.n_u;
        let z: Vec<f64> = self.rows.iter().flat_map(|r| [r.time, r.nu]).collect();
        let pass = self.model.predict_with_tangent(&z, &[1.0, 0.0])?;
        let tangents = pass.tangents.as_deref().expect("tangent pass");
        let mut out_cot = vec![0.0; pass.outputs.len()];
        let mut tan_cot = vec![0.0; pass.outputs.len()];

        // data term in standardized units
        let data_rows: Vec<usize> = (0..self.rows.len()).filter(|&r| self.rows[r].target.is_some()).collect();
        let mut l_data = 0.0;
        if !data_rows.is_empty() {
            let n = (data_rows.len() * nq) as f64;
            for &r in &data_rows {
                let target = self.rows[r].target.as_ref().expect("filtered");
                for k in 0..nq {
                    let s = self.model.output.scale[k];
                    let diff = (pass.outputs[r * nq + k] - target[k]) / s;
                    l_data += diff * diff / n;
                    out_cot[r * nq + k] += self.cfg.lambda3 * 2.0 * diff / s / n;
                }
            }
        }

        let phys = self.physics_rows();
        let (mut l_mom, mut l_p, mut dis_mom, mut dis_p) = (0.0, 0.0, 0.0, 0.0);
        let mut p_out = vec![0.0; pass.outputs.len()];
        let mut p_tan = vec![0.0; pass.outputs.len()];
        if !phys.is_empty() {
            let q: Vec<Vec<f64>> = phys.iter().map(|&r| pass.outputs[r * nq..(r + 1) * nq].to_vec()).collect();
            let pts: Vec<(f64, f64)> = phys.iter().map(|&r| (self.rows[r].time, self.rows[r].nu)).collect();
            let st = states(&q, &pts, nu_);
            let evals = self.solver.evaluate(&st)?;
            ensure_len("reduced evaluations", phys.len(), evals.len())?;
            let n1 = (phys.len() * nu_) as f64;
            let n2 = evals.iter().map(|e| e.constraint.len()).sum::<usize>().max(1) as f64;
            let r1: Vec<Vec<f64>> = phys
                .iter()
                .zip(&evals)
                .map(|(&r, e)| (0..nu_).map(|k| tangents[r * nq + k] - e.x[k]).collect())
                .collect();
            l_mom = r1.iter().flatten().map(|v| v * v).sum::<f64>() / n1;
            l_p = evals.iter().flat_map(|e| &e.constraint).map(|v| v * v).sum::<f64>() / n2;
            if self.cfg.mode != PhysicsMode::DataOnly {
                let corrected = self.cfg.mode == PhysicsMode::Corrected;
                if corrected && (self.cached.is_none() || self.epoch % self.cfg.k_int == 0) {
                    let jac = self.solver.jacobians(&st, self.cfg.fd_eps)?;
                    ensure_len("reduced Jacobians", phys.len(), jac.len())?;
                    self.cached = Some(jac);
                }
                for (k, &r) in phys.iter().enumerate() {
                    let w: Vec<f64> = r1[k].iter().map(|v| 2.0 * v / n1).collect();
                    for i in 0..nu_ {
                        p_tan[r * nq + i] += self.cfg.lambda1 * w[i];
                        dis_mom += w[i] * r1[k][i];
                    }
                    if let Some(jac) = self.cached.as_ref().filter(|_| corrected) {
                        let wj = jac[k].dx.matvec_transpose(&w)?;
                        for c in 0..nq {
                            p_out[r * nq + c] -= self.cfg.lambda1 * wj[c];
                            dis_mom -= wj[c] * q[k][c];
                        }
                        if let Some(dp) = &jac[k].dconstraint {
                            let w2: Vec<f64> = evals[k].constraint.iter().map(|v| 2.0 * v / n2).collect();
                            let wp = dp.matvec_transpose(&w2)?;
                            for c in 0..nq {
                                p_out[r * nq + c] += self.cfg.lambda2 * wp[c];
                                dis_p += wp[c] * q[k][c];
                            }
                        }
                    }
                }
            }
        }
        for (c, p) in out_cot.iter_mut().zip(&p_out) {
            *c += p;
        }
        for (c, p) in tan_cot.iter_mut().zip(&p_tan) {
            *c += p;
        }
        let grad = self.model.backward(&pass, &out_cot, Some(&tan_cot))?;
        let physics_grad = self.model.backward(&pass, &p_out, Some(&p_tan))?;
        let total = match self.cfg.mode {
            PhysicsMode::DataOnly => self.cfg.lambda3 * l_data,
            _ => self.cfg.lambda1 * dis_mom + self.cfg.lambda2 * dis_p + self.cfg.lambda3 * l_data,
        };
        let l_dis = dis_mom + dis_p;
        let report = LossReport {
            epoch: self.epoch,
            l_data,
            l_eqn: l_mom + l_p,
            l_dis,
            total,
            wall_time: start.elapsed().as_secs_f64(),
        };
        if ![l_data, l_mom, l_p, l_dis, total].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("loss at epoch {}", self.epoch)));
        }
        Ok(RomGradient { report, l_eqn_mom: l_mom, l_eqn_pressure: l_p, grad, physics_grad })
    }

    pub fn apply(&mut self, g: &RomGradient) -> Result<()> {
        adam_step(&mut self.adam, &mut self.model.net, &g.grad)?;
        self.epoch += 1;
        Ok(())
    }

    pub fn step(&mut self) -> Result<RomGradient> {
        let epoch = self.epoch;
        let wrap = |e: Error| Error::Training { epoch, source: Box::new(e) };
        let start = Instant::now();
        let mut g = self.gradient().map_err(wrap)?;
        self.apply(&g).map_err(wrap)?;
        g.report.wall_time = start.elapsed().as_secs_f64();
        Ok(g)
    }

    pub fn run(&mut self, mut hook: impl FnMut(&RomGradient, &Model) -> Result<()>) -> Result<Vec<LossReport>> {
        let mut reports = Vec::with_capacity(self.cfg.epochs);
        while self.epoch < self.cfg.epochs {
            let g = self.step()?;
            hook(&g, &self.model)?;
            reports.push(g.report);
        }
        Ok(reports)
    }
}

/// Predicted `Q` and `a'` at `(t, nu)` points.
pub fn predict(model: &Model, points: &[(f64, f64)]) -> Result<RomPrediction> {
    let z: Vec<f64> = points.iter().flat_map(|&(t, nu)| [t, nu]).collect();
    let pass = model.predict_with_tangent(&z, &[1.0, 0.0])?;
    let nq = model.net.output_dim();
    let tangents = pass.tangents.expect("tangent pass");
    Ok(RomPrediction {
        q: pass.outputs.chunks(nq).map(<[f64]>::to_vec).collect(),
        a_dot: tangents.chunks(nq).map(<[f64]>::to_vec).collect(),
    })
}

fn states(q: &[Vec<f64>], pts: &[(f64, f64)], n_u: usize) -> Vec<ReducedState> {
    q.iter()
        .zip(pts)
        .map(|(q, &(time, nu))| ReducedState { a: q[..n_u].to_vec(), b: q[n_u..].to_vec(), time, nu })
        .collect()
}
