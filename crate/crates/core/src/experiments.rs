//! Ready-made setups: the 2D transport benchmark, FOM training runs and the
//! Burgers reduced-order task. The CLI and the acceptance suite build on
//! these.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{fom_model, predict_fields, FomSolver, FomTrainConfig, FomTrainer, LossReport};
use crate::fv::{build_grid, march, ConvectionScheme, Field, Grid, TransportConfig, TransportProblem};
use crate::io::{max_abs_error, relative_l2};
use crate::nn::{Activation, Affine, Model};
use crate::pod::{pod, project_operators, rom_march, PodBasis, ReducedState, SnapshotSet};
use crate::rom::{predict, rom_model, ReducedSolver, ReducedSystemSet, RomRow, RomTrainConfig, RomTrainer};

/// The 21 x 21 unit square of the benchmark.
pub fn benchmark_grid() -> Grid {
    build_grid(21, 21, 1.0, 1.0).expect("valid benchmark grid")
}

/// Both velocity components equal 1 on `[0.25, 0.5]^2`, 0 elsewhere.
pub fn benchmark_initial_condition(grid: &Grid) -> Field {
    Field::pulse(grid, 2, 0.25, 0.5, 1.0)
}

/// The initial condition followed by `n_steps` solver steps.
pub fn fom_trajectory(grid: &Grid, cfg: &TransportConfig, u0: &Field, n_steps: usize) -> Result<Vec<Field>> {
    let mut out = vec![u0.clone()];
    out.extend(march(grid, cfg, u0, n_steps)?);
    Ok(out)
}

/// Network shape of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig { hidden: vec![124, 100, 80, 64], activation: Activation::Softplus }
    }
}

/// Physics window of the FOM runs, used for the input normalization.
pub const FOM_WINDOW: (f64, f64) = (0.0, 0.2);

/// Trains a time-to-field network on a benchmark trajectory.
pub fn train_fom<S: FomSolver>(
    bench: &[Field],
    net: &NetworkConfig,
    train: &FomTrainConfig,
    seed: u64,
    solver: S,
    hook: impl FnMut(&LossReport, &Model) -> Result<()>,
) -> Result<(Model, Vec<LossReport>)> {
    let model = fom_model(&net.hidden, net.activation, seed, bench[0].len(), FOM_WINDOW.0, FOM_WINDOW.1)?;
    let mut trainer = FomTrainer::new(train.clone(), model, bench, solver)?;
    let reports = trainer.run(hook)?;
    Ok((trainer.into_model(), reports))
}

/// In-process variant of [`train_fom`].
pub fn train_fom_inproc(
    grid: &Grid,
    transport: &TransportConfig,
    bench: &[Field],
    net: &NetworkConfig,
    train: &FomTrainConfig,
    seed: u64,
) -> Result<(Model, Vec<LossReport>)> {
    let problem = TransportProblem::new(grid.clone(), transport.clone())?;
    train_fom(bench, net, train, seed, problem, |_, _| Ok(()))
}

/// Max-abs error of a time-to-field model against the benchmark row
/// nearest each time.
pub fn fom_errors(model: &Model, bench: &[Field], times: &[f64]) -> Result<Vec<f64>> {
    let pred = predict_fields(model, &bench[0], times)?;
    pred.iter()
        .zip(times)
        .map(|(p, &t)| max_abs_error(&p.values, &nearest(bench, t)?.values))
        .collect()
}

fn nearest(bench: &[Field], t: f64) -> Result<&Field> {
    bench
        .iter()
        .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
        .filter(|f| (f.time - t).abs() < 1e-9 + 1e-6 * t.abs())
        .ok_or_else(|| Error::invalid(format!("no benchmark row at t = {t}")))
}

/// The Burgers reduced-order task: FOM runs at training viscosities with
/// central convection, a joint POD basis, and projected systems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RomTaskConfig {
    pub nus: Vec<f64>,
    /// Viscosity never seen in training, evaluated for generalization.
    pub nu_test: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Snapshot and evaluation spacing, in solver steps.
    pub snapshot_stride: usize,
    pub n_modes: usize,
    /// Solver steps of the data rows.
    pub data_steps: Vec<usize>,
    /// Physics rows every this many solver steps.
    pub physics_stride: usize,
}

impl Default for RomTaskConfig {
    fn default() -> Self {
        RomTaskConfig {
            nus: vec![0.01, 0.012],
            nu_test: 0.011,
            t_end: 0.4,
            dt: 0.001,
            snapshot_stride: 10,
            n_modes: 20,
            data_steps: vec![0, 100, 200, 300, 400],
            physics_stride: 10,
        }
    }
}

/// FOM reference of one viscosity at every snapshot instant.
#[derive(Debug, Clone, PartialEq)]
pub struct RomReference {
    pub nu: f64,
    pub fields: Vec<Field>,
}

pub struct RomTask {
    pub config: RomTaskConfig,
    pub grid: Grid,
    pub basis: PodBasis,
    pub systems: ReducedSystemSet,
    pub references: Vec<RomReference>,
    pub test_reference: RomReference,
}

impl RomTaskConfig {
    /// Solver steps of the window.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn transport(&self, nu: f64) -> TransportConfig {
        TransportConfig { nu, dt: self.dt, convection_scheme: ConvectionScheme::Central, ..TransportConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nus.is_empty() || self.snapshot_stride == 0 || self.physics_stride == 0 || self.n_modes == 0 {
            return Err(Error::invalid("rom task needs viscosities, positive strides and modes"));
        }
        if let Some(s) = self.data_steps.iter().find(|&&s| s > self.n_steps() || s % self.snapshot_stride != 0) {
            return Err(Error::invalid(format!("data step {s} is not a snapshot of the window")));
        }
        if self.physics_stride % self.snapshot_stride != 0 {
            return Err(Error::invalid("physics stride must be a multiple of the snapshot stride"));
        }
        Ok(())
    }
}

impl RomTask {
    /// The task on the benchmark grid.
    pub fn build(config: RomTaskConfig) -> Result<Self> {
        Self::build_on(benchmark_grid(), config)
    }

    pub fn build_on(grid: Grid, config: RomTaskConfig) -> Result<Self> {
        config.validate()?;
        let u0 = benchmark_initial_condition(&grid);
        let reference = |nu: f64| -> Result<RomReference> {
            let all = fom_trajectory(&grid, &config.transport(nu), &u0, config.n_steps())?;
            let fields = all.into_iter().step_by(config.snapshot_stride).collect();
            Ok(RomReference { nu, fields })
        };
        let references = config.nus.iter().map(|&nu| reference(nu)).collect::<Result<Vec<_>>>()?;
        let test_reference = reference(config.nu_test)?;
        let mut snaps = SnapshotSet::new(&grid, 2);
        for r in &references {
            for f in &r.fields {
                snaps.push(f, r.nu)?;
            }
        }
        let basis = pod(&snaps, config.n_modes)?;
        if basis.n_modes() < config.n_modes {
            log::warn!("basis holds {} of the requested {} modes", basis.n_modes(), config.n_modes);
        }
        let systems = Self::systems_for(&grid, &config, &basis)?;
        Ok(RomTask { config, grid, basis, systems, references, test_reference })
    }

    fn systems_for(grid: &Grid, config: &RomTaskConfig, basis: &PodBasis) -> Result<ReducedSystemSet> {
        let sys = config
            .nus
            .iter()
            .chain([&config.nu_test])
            .map(|&nu| project_operators(grid, &config.transport(nu), basis, None))
            .collect::<Result<Vec<_>>>()?;
        ReducedSystemSet::new(sys)
    }

    /// The same task on the first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<RomTask> {
        let basis = self.basis.truncated(n)?;
        let systems = Self::systems_for(&self.grid, &self.config, &basis)?;
        Ok(RomTask { basis, systems, config: self.config.clone(), grid: self.grid.clone(), references: self.references.clone(), test_reference: self.test_reference.clone() })
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    /// Solver for the training viscosities only.
    pub fn training_solver(&self) -> Result<ReducedSystemSet> {
        ReducedSystemSet::new(self.systems.systems[..self.config.nus.len()].to_vec())
    }

    /// Data rows at the configured steps and physics rows on the physics
    /// stride, for every training viscosity. `with_physics = false` drops
    /// the physics rows.
    pub fn rows(&self, with_physics: bool) -> Result<Vec<RomRow>> {
        let mut rows = Vec::new();
        let ratio = self.config.physics_stride / self.config.snapshot_stride;
        for r in &self.references {
            for (k, f) in r.fields.iter().enumerate() {
                let step = k * self.config.snapshot_stride;
                let data = self.config.data_steps.contains(&step);
                let physics = with_physics && k % ratio == 0;
                if data || physics {
                    let target = if data { Some(self.basis.project(&f.values)?) } else { None };
                    rows.push(RomRow { time: f.time, nu: r.nu, target, physics });
                }
            }
        }
        Ok(rows)
    }

    /// Per-mode standardization over the projected training snapshots.
    pub fn output_scaling(&self) -> Result<Affine> {
        let mut coeffs = Vec::new();
        for r in &self.references {
            for f in &r.fields {
                coeffs.extend(self.basis.project(&f.values)?);
            }
        }
        Affine::standardize(&coeffs, self.n_modes())
    }

    pub fn model(&self, net: &NetworkConfig, seed: u64) -> Result<Model> {
        let nus = &self.config.nus;
        let lo = nus.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = nus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rom_model(&net.hidden, net.activation, seed, (0.0, self.config.t_end), (lo, hi), self.output_scaling()?)
    }

    /// Trains on the task rows; `physics = false` gives the data-only baseline.
    pub fn train<S: ReducedSolver>(
        &self,
        net: &NetworkConfig,
        train: &RomTrainConfig,
        seed: u64,
        solver: S,
        hook: impl FnMut(&crate::rom::RomGradient, &Model) -> Result<()>,
    ) -> Result<(Model, Vec<LossReport>)> {
        let physics = train.mode != crate::fom::PhysicsMode::DataOnly;
        let mut trainer = RomTrainer::new(train.clone(), self.model(net, seed)?, self.rows(physics)?, self.n_modes(), solver)?;
        let reports = trainer.run(hook)?;
        Ok((trainer.into_model(), reports))
    }

    fn reference(&self, nu: f64) -> Result<&RomReference> {
        self.references
            .iter()
            .chain([&self.test_reference])
            .find(|r| (r.nu - nu).abs() <= 1e-12 * nu.abs())
            .ok_or_else(|| Error::invalid(format!("no reference at nu = {nu}")))
    }

    /// Relative L2 error per snapshot instant of reconstructed coefficients.
    pub fn field_errors(&self, nu: f64, coeffs: &[Vec<f64>]) -> Result<Vec<f64>> {
        let r = self.reference(nu)?;
        if coeffs.len() != r.fields.len() {
            return Err(Error::shape("coefficient rows", r.fields.len(), coeffs.len()));
        }
        r.fields
            .iter()
            .zip(coeffs)
            .map(|(f, a)| relative_l2(&self.basis.reconstruct(a)?, &f.values))
            .collect()
    }

    /// Network errors per snapshot instant at viscosity `nu`.
    pub fn network_errors(&self, model: &Model, nu: f64) -> Result<Vec<f64>> {
        let pts: Vec<(f64, f64)> = self.reference(nu)?.fields.iter().map(|f| (f.time, nu)).collect();
        let n_u = self.n_modes();
        let q: Vec<Vec<f64>> = predict(model, &pts)?.q.into_iter().map(|q| q[..n_u].to_vec()).collect();
        self.field_errors(nu, &q)
    }

    /// POD-Galerkin errors per snapshot instant: the reduced ODE from the
    /// projected initial condition.
    pub fn galerkin_errors(&self, nu: f64) -> Result<Vec<f64>> {
        let r = self.reference(nu)?;
        let sys = self.systems.for_nu(nu)?;
        let a0 = ReducedState::new(self.basis.project(&r.fields[0].values)?, 0.0, nu);
        let traj = rom_march(sys, &a0, self.config.dt, self.config.n_steps())?;
        let coeffs: Vec<Vec<f64>> = std::iter::once(a0.a.clone())
            .chain(traj.into_iter().map(|s| s.a))
            .step_by(self.config.snapshot_stride)
            .collect();
        self.field_errors(nu, &coeffs)
    }
}

pub fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
