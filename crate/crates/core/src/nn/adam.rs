use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::error::{ensure_len, Error, Result};

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params.theta`. A non-finite gradient
/// leaves both the parameters and the state untouched.
pub fn adam_step(state: &mut AdamState, params: &mut MlpParams, grad: &[f64]) -> Result<()> {
    ensure_len("adam gradient", params.n_params(), grad.len())?;
    ensure_len("adam moments", params.n_params(), state.m.len())?;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {}", params.tensor_name(i))));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (((p, m), v), &g) in params.theta.iter_mut().zip(&mut state.m).zip(&mut state.v).zip(grad) {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}
