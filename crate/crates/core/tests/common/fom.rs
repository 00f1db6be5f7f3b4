use dispinn::fom::{fom_model, FomTrainConfig, FomTrainer};
use dispinn::fv::{build_grid, march, Field, TransportConfig, TransportProblem};
use dispinn::nn::{Activation, Model};

pub fn toy(convection_coeff: f64) -> (TransportProblem, Vec<Field>) {
    let grid = build_grid(3, 3, 1.0, 1.0).unwrap();
    let cfg = TransportConfig { dt: 0.01, convection_coeff, ..TransportConfig::default() };
    let mut u0 = Field::pulse(&grid, 2, 0.3, 0.7, 1.0);
    for (k, v) in u0.values.iter_mut().enumerate() {
        *v += 0.1 * (k as f64 * 0.7).sin();
    }
    let mut bench = vec![u0.clone()];
    bench.extend(march(&grid, &cfg, &u0, 20).unwrap());
    (TransportProblem::new(grid, cfg).unwrap(), bench)
}

pub fn fd_physics_gradient(trainer: &mut FomTrainer<TransportProblem>, model: &Model) -> Vec<f64> {
    let h = 1e-5;
    (0..model.net.n_params())
        .map(|i| {
            let mut m = model.clone();
            m.net.theta[i] += h;
            let up = trainer.physics_loss(&m).unwrap();
            m.net.theta[i] -= 2.0 * h;
            let dn = trainer.physics_loss(&m).unwrap();
            (up - dn) / (2.0 * h)
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn trainer(problem: TransportProblem, bench: &[Field], cfg: FomTrainConfig) -> FomTrainer<TransportProblem> {
    seeded_trainer(problem, bench, cfg, 11)
}

/// A one-hidden-layer toy net of at most 200 parameters.
pub fn seeded_trainer(problem: TransportProblem, bench: &[Field], cfg: FomTrainConfig, seed: u64) -> FomTrainer<TransportProblem> {
    let model = fom_model(&[3], Activation::Softplus, seed, bench[0].len(), 0.0, 0.2).unwrap();
    assert!(model.net.n_params() <= 200);
    FomTrainer::new(cfg, model, bench, problem).unwrap()
}
