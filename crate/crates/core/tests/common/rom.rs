use dispinn::linalg::{DenseMatrix, Tensor3};
use dispinn::nn::{Activation, Affine};
use dispinn::pod::ReducedSystem;
use dispinn::rom::{rom_model, ReducedSystemSet, RomRow, RomTrainConfig, RomTrainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NUS: [f64; 2] = [0.5, 0.8];

pub fn random_system(seed: u64, n_u: usize, n_p: usize, nu: f64) -> ReducedSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mat = |r: usize, c: usize| {
        let v: Vec<f64> = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::from_vec(r, c, v).unwrap()
    };
    let mut m = mat(n_u, n_u);
    for i in 0..n_u {
        m[(i, i)] += 3.0;
    }
    let d = mat(n_u, n_u);
    let c = Tensor3::from_vec([n_u, n_u, n_u], mat(n_u, n_u * n_u).into_values()).unwrap();
    let (b, p) = if n_p > 0 { (Some(mat(n_u, n_p)), Some(mat(n_p, n_u))) } else { (None, None) };
    ReducedSystem { nu, m, d, c, b, p }
}

pub fn set(seed: u64, n_u: usize, n_p: usize) -> ReducedSystemSet {
    ReducedSystemSet::new(NUS.iter().map(|&nu| random_system(seed, n_u, n_p, nu)).collect()).unwrap()
}

pub fn rows() -> Vec<RomRow> {
    NUS.iter()
        .flat_map(|&nu| (0..6).map(move |k| RomRow { time: k as f64 * 0.2, nu, target: None, physics: true }))
        .collect()
}

pub fn trainer(seed: u64, n_u: usize, n_p: usize, cfg: RomTrainConfig) -> RomTrainer<ReducedSystemSet> {
    let model = rom_model(&[5, 5], Activation::Tanh, seed, (0.0, 1.0), (NUS[0], NUS[1]), Affine::identity(n_u + n_p)).unwrap();
    RomTrainer::new(cfg, model, rows(), n_u, set(seed, n_u, n_p)).unwrap()
}

/// Central differences of `lambda1 L_mom + lambda2 L_p` in the parameters.
pub fn fd_gradient(t: &mut RomTrainer<ReducedSystemSet>, cfg: &RomTrainConfig) -> Vec<f64> {
    let model = t.model().clone();
    let h = 1e-5;
    (0..model.net.n_params())
        .map(|i| {
            let mut m = model.clone();
            let mut eval = |d: f64| {
                m.net.theta[i] = model.net.theta[i] + d;
                let (mom, p) = t.physics_loss(&m).unwrap();
                cfg.lambda1 * mom + cfg.lambda2 * p
            };
            (eval(h) - eval(-h)) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Replaces every `P` by `[1, 1]`, so that `R2 = a_0 + a_1`.
pub fn set_unit_pressure(t: &mut RomTrainer<ReducedSystemSet>) {
    for s in &mut t.solver_mut().systems {
        s.p = Some(DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap());
    }
}

/// With `P = [1, 1]` on two modes and one pressure coefficient,
/// `dL_p/dQ = 2 R2 [1, 1, 0] / N2` exactly; backpropagated by hand.
pub fn pressure_oracle(t: &RomTrainer<ReducedSystemSet>) -> Vec<f64> {
    let model = t.model();
    let z: Vec<f64> = rows().iter().flat_map(|r| [r.time, r.nu]).collect();
    let pass = model.predict_with_tangent(&z, &[1.0, 0.0]).unwrap();
    let n2 = rows().len() as f64;
    let mut cot = vec![0.0; pass.outputs.len()];
    for (r, q) in pass.outputs.chunks(3).enumerate() {
        let r2 = q[0] + q[1];
        cot[3 * r] = 2.0 * r2 / n2;
        cot[3 * r + 1] = 2.0 * r2 / n2;
    }
    model.backward(&pass, &cot, None).unwrap()
}
