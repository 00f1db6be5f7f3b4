use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Activation, ForwardCache, MlpParams};
use crate::error::{ensure_len, Error, Result};

/// Per-column affine map `normalized = (raw - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(n: usize) -> Self {
        Affine { shift: vec![0.0; n], scale: vec![1.0; n] }
    }

    pub fn new(shift: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        ensure_len("affine scale", shift.len(), scale.len())?;
        if scale.iter().any(|s| !(s.is_finite() && *s != 0.0)) || shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("affine map needs finite shifts and nonzero finite scales"));
        }
        Ok(Affine { shift, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Maps `[lo, hi]` onto `[0, 1]`.
    pub fn unit_interval(lo: f64, hi: f64) -> Result<Self> {
        let span = if hi > lo { hi - lo } else { 1.0 };
        Affine::new(vec![lo], vec![span])
    }

    /// Zero mean and unit variance per column of a row-major table. Columns
    /// with zero spread keep unit scale.
    pub fn standardize(values: &[f64], cols: usize) -> Result<Self> {
        if cols == 0 || values.is_empty() || values.len() % cols != 0 {
            return Err(Error::invalid("standardize needs a non-empty row-major table"));
        }
        let rows = values.len() / cols;
        let mut shift = vec![0.0; cols];
        let mut scale = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                shift[c] += values[r * cols + c] / rows as f64;
            }
        }
        for r in 0..rows {
            for c in 0..cols {
                scale[c] += (values[r * cols + c] - shift[c]).powi(2) / rows as f64;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        Affine::new(shift, scale)
    }

    /// Joins column maps side by side.
    pub fn concat(parts: &[Affine]) -> Affine {
        Affine {
            shift: parts.iter().flat_map(|a| a.shift.iter().copied()).collect(),
            scale: parts.iter().flat_map(|a| a.scale.iter().copied()).collect(),
        }
    }

    pub fn normalize(&self, raw: &[f64]) -> Vec<f64> {
        let d = self.dim();
        raw.iter().enumerate().map(|(k, v)| (v - self.shift[k % d]) / self.scale[k % d]).collect()
    }

    pub fn denormalize(&self, norm: &[f64]) -> Vec<f64> {
        let d = self.dim();
        norm.iter().enumerate().map(|(k, v)| self.shift[k % d] + self.scale[k % d] * v).collect()
    }
}

/// A network together with its input normalization and output scaling:
/// `y_raw = out.denormalize(net(in.normalize(z_raw)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub net: MlpParams,
    pub input: Affine,
    pub output: Affine,
    pub seed: u64,
}

/// Raw-unit outputs of a forward pass with the cache for backpropagation.
#[derive(Debug, Clone)]
pub struct ModelPass {
    pub outputs: Vec<f64>,
    pub tangents: Option<Vec<f64>>,
    cache: ForwardCache,
}

impl ModelPass {
    pub fn rows(&self) -> usize {
        self.cache.rows()
    }
}

const MAGIC: &str = "dispinn-model v1";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    layer_sizes: Vec<usize>,
    activation: Activation,
    seed: u64,
    n_params: usize,
    input_dim: usize,
    output_dim: usize,
}

impl Model {
    pub fn new(net: MlpParams, input: Affine, output: Affine, seed: u64) -> Result<Self> {
        ensure_len("input normalization", net.input_dim(), input.dim())?;
        ensure_len("output scaling", net.output_dim(), output.dim())?;
        Ok(Model { net, input, output, seed })
    }

    pub fn predict(&self, z: &[f64]) -> Result<ModelPass> {
        let cache = self.net.forward(&self.input.normalize(z))?;
        let outputs = self.output.denormalize(cache.output());
        Ok(ModelPass { outputs, tangents: None, cache })
    }

    /// Forward pass carrying d y_raw / d z_raw along `direction` (raw units).
    pub fn predict_with_tangent(&self, z: &[f64], direction: &[f64]) -> Result<ModelPass> {
        ensure_len("tangent direction", self.input.dim(), direction.len())?;
        let dir: Vec<f64> = direction.iter().zip(&self.input.scale).map(|(d, s)| d / s).collect();
        let cache = self.net.forward_with_tangent(&self.input.normalize(z), &dir)?;
        let outputs = self.output.denormalize(cache.output());
        let d = self.output.dim();
        let tangents = cache
            .output_tangent()
            .expect("tangent requested")
            .iter()
            .enumerate()
            .map(|(k, v)| self.output.scale[k % d] * v)
            .collect();
        Ok(ModelPass { outputs, tangents: Some(tangents), cache })
    }

    /// Gradient over `theta` of `<out_cot, y_raw> + <tan_cot, y_dot_raw>`.
    pub fn backward(&self, pass: &ModelPass, out_cot: &[f64], tan_cot: Option<&[f64]>) -> Result<Vec<f64>> {
        let d = self.output.dim();
        let scale = |c: &[f64]| -> Vec<f64> { c.iter().enumerate().map(|(k, v)| v * self.output.scale[k % d]).collect() };
        let oc = scale(out_cot);
        let tc = tan_cot.map(scale);
        self.net.backward(&pass.cache, &oc, tc.as_deref())
    }

    /// Writes a JSON header line, then the little-endian `f64` blob of
    /// `theta` followed by the input and output maps.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let header = Header {
            format: MAGIC.into(),
            layer_sizes: self.net.layer_sizes.clone(),
            activation: self.net.activation,
            seed: self.seed,
            n_params: self.net.n_params(),
            input_dim: self.input.dim(),
            output_dim: self.output.dim(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let blob = self
            .net
            .theta
            .iter()
            .chain(&self.input.shift)
            .chain(&self.input.scale)
            .chain(&self.output.shift)
            .chain(&self.output.scale);
        for v in blob {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.format != MAGIC {
            return Err(Error::Format(format!("unknown checkpoint format {:?}", header.format)));
        }
        let n = header.n_params + 2 * header.input_dim + 2 * header.output_dim;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * n {
            return Err(Error::Format(format!("checkpoint blob holds {} bytes, expected {}", bytes.len(), 8 * n)));
        }
        let mut vals = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut take = |k: usize| vals.by_ref().take(k).collect::<Vec<f64>>();
        let theta = take(header.n_params);
        let input = Affine::new(take(header.input_dim), take(header.input_dim))?;
        let output = Affine::new(take(header.output_dim), take(header.output_dim))?;
        let net = MlpParams::from_theta(&header.layer_sizes, header.activation, theta)?;
        Model::new(net, input, output, header.seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Model::read_from(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let net = MlpParams::glorot(&[2, 6, 3], Activation::Softplus, 5).unwrap();
        let input = Affine::new(vec![0.1, 0.02], vec![0.35, 0.004]).unwrap();
        let output = Affine::new(vec![1.0, -2.0, 0.5], vec![0.3, 2.0, 1.0 / 3.0]).unwrap();
        Model::new(net, input, output, 5).unwrap()
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let m = model();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = Model::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let mut buf = Vec::new();
        model().write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(Model::read_from(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn raw_tangent_applies_the_chain_rule() {
        let m = model();
        let z = [0.2, 0.021];
        let pass = m.predict_with_tangent(&z, &[1.0, 0.0]).unwrap();
        let h = 1e-5;
        let up = m.predict(&[z[0] + h, z[1]]).unwrap().outputs;
        let dn = m.predict(&[z[0] - h, z[1]]).unwrap().outputs;
        for k in 0..3 {
            let fd = (up[k] - dn[k]) / (2.0 * h);
            let t = pass.tangents.as_ref().unwrap()[k];
            assert!((fd - t).abs() <= 1e-6 * t.abs().max(1.0), "{fd} vs {t}");
        }
    }

    #[test]
    fn standardize_handles_constant_columns() {
        let a = Affine::standardize(&[1.0, 5.0, 3.0, 5.0], 2).unwrap();
        assert_eq!(a.shift, vec![2.0, 5.0]);
        assert_eq!(a.scale, vec![1.0, 1.0]);
    }
}
