use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::linalg::{gemm, Transpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Tanh,
}

impl Activation {
    /// Value, first and second derivative at `x`.
    #[inline]
    pub fn eval(self, x: f64) -> (f64, f64, f64) {
        match self {
            Activation::Softplus => {
                let e = (-x.abs()).exp();
                let value = x.max(0.0) + e.ln_1p();
                let sig = if x >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
                (value, sig, sig * (1.0 - sig))
            }
            Activation::Tanh => {
                let t = x.tanh();
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
        }
    }
}

/// Fully-connected network `y = W_L f(... f(W_1 z + c_1) ...) + c_L` with a
/// linear output layer.
///
/// All parameters live in one flat vector `theta`; layer `l` stores its
/// `out x in` weight matrix row-major followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub theta: Vec<f64>,
}

/// Intermediate values of a forward pass, needed by the backward passes.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    rows: usize,
    /// `h[0]` is the input; `h[l]` the activation of layer `l`.
    h: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    s: Vec<Vec<f64>>,
    /// Tangent of `h` and of `s` along the input direction, when computed.
    h_dot: Option<Vec<Vec<f64>>>,
    s_dot: Option<Vec<Vec<f64>>>,
    n_params: usize,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn output(&self) -> &[f64] {
        self.s.last().expect("at least one layer")
    }

    /// Output tangent, when the forward pass carried one.
    pub fn output_tangent(&self) -> Option<&[f64]> {
        self.s_dot.as_ref().map(|s| s.last().expect("at least one layer").as_slice())
    }
}

fn count_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl MlpParams {
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {layer_sizes:?}")));
        }
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            theta: vec![0.0; count_params(layer_sizes)],
        })
    }

    /// Glorot-uniform weights `U(+-sqrt(6 / (fan_in + fan_out)))` and zero
    /// biases, drawn from a ChaCha8 stream seeded by `seed`.
    pub fn glorot(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..p.n_layers() {
            let (fan_in, fan_out) = (p.layer_sizes[l], p.layer_sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let (w, _) = p.weight_range(l);
            for v in &mut p.theta[w] {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn from_theta(layer_sizes: &[usize], activation: Activation, theta: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, activation)?;
        ensure_len("network parameters", p.theta.len(), theta.len())?;
        ensure_finite("network parameters", &theta)?;
        p.theta = theta;
        Ok(p)
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated sizes")
    }

    fn offset(&self, layer: usize) -> usize {
        count_params(&self.layer_sizes[..=layer])
    }

    /// Index ranges of the weights and bias of `layer` inside `theta`.
    pub fn weight_range(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start = self.offset(layer);
        let (fan_in, fan_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        let w_end = start + fan_in * fan_out;
        (start..w_end, w_end..w_end + fan_out)
    }

    /// Human-readable name of the tensor holding `theta[index]`, e.g. `W2`.
    pub fn tensor_name(&self, index: usize) -> String {
        for l in 0..self.n_layers() {
            let (w, c) = self.weight_range(l);
            if w.contains(&index) {
                return format!("W{}", l + 1);
            }
            if c.contains(&index) {
                return format!("c{}", l + 1);
            }
        }
        format!("theta[{index}]")
    }

    fn check_input(&self, z: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if z.len() % d != 0 {
            return Err(Error::shape("network input columns", d, z.len() % d));
        }
        ensure_finite("network input", z)?;
        Ok(z.len() / d)
    }

    /// Row-wise forward pass over a row-major batch `z` (`rows x input_dim`).
    pub fn forward(&self, z: &[f64]) -> Result<ForwardCache> {
        self.run(z, None)
    }

    /// Forward pass that also carries the tangent along `direction` in input
    /// space (the same direction for every row).
    pub fn forward_with_tangent(&self, z: &[f64], direction: &[f64]) -> Result<ForwardCache> {
        ensure_len("tangent direction", self.input_dim(), direction.len())?;
        self.run(z, Some(direction))
    }

    fn run(&self, z: &[f64], direction: Option<&[f64]>) -> Result<ForwardCache> {
        let rows = self.check_input(z)?;
        let n_layers = self.n_layers();
        let mut h = vec![z.to_vec()];
        let mut s = Vec::with_capacity(n_layers);
        let mut h_dot = direction.map(|d| vec![d.iter().copied().cycle().take(z.len()).collect::<Vec<_>>()]);
        let mut s_dot: Option<Vec<Vec<f64>>> = direction.map(|_| Vec::with_capacity(n_layers));
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (wr, cr) = self.weight_range(l);
            let w = &self.theta[wr];
            let mut pre = Vec::with_capacity(rows * fan_out);
            for _ in 0..rows {
                pre.extend_from_slice(&self.theta[cr.clone()]);
            }
            gemm(Transpose::No, Transpose::Yes, 1.0, &h[l], rows, fan_in, w, fan_out, fan_in, 1.0, &mut pre);
            let last = l + 1 == n_layers;
            if let (Some(hd), Some(sd)) = (h_dot.as_mut(), s_dot.as_mut()) {
                let mut pre_dot = vec![0.0; rows * fan_out];
                gemm(Transpose::No, Transpose::Yes, 1.0, &hd[l], rows, fan_in, w, fan_out, fan_in, 0.0, &mut pre_dot);
                if !last {
                    let act: Vec<f64> = pre.iter().zip(&pre_dot).map(|(&x, &dx)| self.activation.eval(x).1 * dx).collect();
                    hd.push(act);
                }
                sd.push(pre_dot);
            }
            if !last {
                h.push(pre.iter().map(|&x| self.activation.eval(x).0).collect());
            }
            s.push(pre);
        }
        let cache = ForwardCache { rows, h, s, h_dot, s_dot, n_params: self.n_params() };
        if cache.output().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(cache)
    }

    /// Gradient of `<out_cot, y> + <tan_cot, y_dot>` with respect to `theta`,
    /// where `y_dot` is the cached output tangent. `tan_cot` requires a cache
    /// from [`MlpParams::forward_with_tangent`].
    pub fn backward(&self, cache: &ForwardCache, out_cot: &[f64], tan_cot: Option<&[f64]>) -> Result<Vec<f64>> {
        if cache.n_params != self.n_params() || cache.s.len() != self.n_layers() {
            return Err(Error::invalid("forward cache does not belong to these parameters"));
        }
        let rows = cache.rows;
        let out_dim = self.output_dim();
        ensure_len("output cotangent", rows * out_dim, out_cot.len())?;
        let tangent = match tan_cot {
            Some(t) => {
                ensure_len("tangent cotangent", rows * out_dim, t.len())?;
                let (hd, sd) = match (&cache.h_dot, &cache.s_dot) {
                    (Some(hd), Some(sd)) => (hd, sd),
                    _ => return Err(Error::invalid("forward cache carries no tangent")),
                };
                Some((t.to_vec(), hd, sd))
            }
            None => None,
        };
        let (mut tan_adj, hd, sd) = match tangent {
            Some((t, hd, sd)) => (Some(t), Some(hd), Some(sd)),
            None => (None, None, None),
        };

        let mut grad = vec![0.0; self.n_params()];
        let mut s_adj = out_cot.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (wr, cr) = self.weight_range(l);
            let w = &self.theta[wr.clone()];
            gemm(Transpose::Yes, Transpose::No, 1.0, &s_adj, rows, fan_out, &cache.h[l], rows, fan_in, 1.0, &mut grad[wr.clone()]);
            if let (Some(ta), Some(hd)) = (&tan_adj, hd) {
                gemm(Transpose::Yes, Transpose::No, 1.0, ta, rows, fan_out, &hd[l], rows, fan_in, 1.0, &mut grad[wr]);
            }
            for r in 0..rows {
                for (g, a) in grad[cr.clone()].iter_mut().zip(&s_adj[r * fan_out..(r + 1) * fan_out]) {
                    *g += a;
                }
            }
            if l == 0 {
                break;
            }
            let mut h_adj = vec![0.0; rows * fan_in];
            gemm(Transpose::No, Transpose::No, 1.0, &s_adj, rows, fan_out, w, fan_out, fan_in, 0.0, &mut h_adj);
            let pre = &cache.s[l - 1];
            match (tan_adj.as_mut(), sd) {
                (Some(ta), Some(sd)) => {
                    let mut hd_adj = vec![0.0; rows * fan_in];
                    gemm(Transpose::No, Transpose::No, 1.0, ta, rows, fan_out, w, fan_out, fan_in, 0.0, &mut hd_adj);
                    let pre_dot = &sd[l - 1];
                    for k in 0..h_adj.len() {
                        let (_, d1, d2) = self.activation.eval(pre[k]);
                        h_adj[k] = h_adj[k] * d1 + hd_adj[k] * pre_dot[k] * d2;
                        hd_adj[k] *= d1;
                    }
                    *ta = hd_adj;
                }
                _ => {
                    for (a, &x) in h_adj.iter_mut().zip(pre) {
                        *a *= self.activation.eval(x).1;
                    }
                }
            }
            s_adj = h_adj;
        }
        Ok(grad)
    }

    /// Outputs and their derivative along `direction` in input space.
    pub fn input_tangent(&self, z: &[f64], direction: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cache = self.forward_with_tangent(z, direction)?;
        let tangent = cache.output_tangent().expect("tangent requested").to_vec();
        Ok((cache.output().to_vec(), tangent))
    }
}
