use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::fv::{Field, Grid};
use crate::io::{read_blob_doc, write_blob_doc};
use crate::linalg::{sym_eig, DenseMatrix};

/// Columns of a snapshot matrix with their time and parameter, and the cell
/// volumes of the discrete `L2` inner product.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub n_cells: usize,
    pub n_components: usize,
    pub weights: Vec<f64>,
    pub grid_hash: String,
    pub columns: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub nus: Vec<f64>,
}

/// `sum_c sum_p w_p a_{c,p} b_{c,p}` over component-major vectors.
pub fn weighted_inner(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let n = weights.len();
    a.iter().zip(b).enumerate().map(|(k, (x, y))| weights[k % n] * x * y).sum()
}

impl SnapshotSet {
    pub fn new(grid: &Grid, n_components: usize) -> Self {
        SnapshotSet {
            n_cells: grid.n_cells(),
            n_components,
            weights: vec![grid.cell_volume; grid.n_cells()],
            grid_hash: grid.hash(),
            columns: Vec::new(),
            times: Vec::new(),
            nus: Vec::new(),
        }
    }

    pub fn from_fields<'a>(grid: &Grid, fields: impl IntoIterator<Item = &'a Field>, nu: f64) -> Result<Self> {
        let mut fields = fields.into_iter().peekable();
        let first = fields.peek().ok_or_else(|| Error::invalid("snapshot set needs at least one field"))?;
        let mut s = SnapshotSet::new(grid, first.n_components);
        for f in fields {
            s.push(f, nu)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, field: &Field, nu: f64) -> Result<()> {
        ensure_len("snapshot cells", self.n_cells, field.n_cells)?;
        ensure_len("snapshot components", self.n_components, field.n_components)?;
        self.columns.push(field.values.clone());
        self.times.push(field.time);
        self.nus.push(nu);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        weighted_inner(&self.weights, a, b)
    }

    /// Correlation matrix `C_ij = <u_i, u_j>`.
    pub fn correlation(&self) -> DenseMatrix {
        let n = self.len();
        let mut c = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.inner(&self.columns[i], &self.columns[j]);
                c.values_mut()[i * n + j] = v;
                c.values_mut()[j * n + i] = v;
            }
        }
        c
    }
}

/// Orthonormal modes under the weighted inner product, with the full
/// descending eigenvalue list of the correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    pub n_cells: usize,
    pub n_components: usize,
    pub weights: Vec<f64>,
    pub grid_hash: String,
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

const EIGEN_FLOOR: f64 = 1e-14;

/// POD of a snapshot set, keeping `n_modes` modes. Modes whose eigenvalue is
/// below `1e-14 lambda_1` are dropped with a warning.
pub fn pod(snapshots: &SnapshotSet, n_modes: usize) -> Result<PodBasis> {
    let ns = snapshots.len();
    if n_modes == 0 || n_modes > ns {
        return Err(Error::invalid(format!("requested {n_modes} modes from {ns} snapshots")));
    }
    let eig = sym_eig(&snapshots.correlation())?;
    let lambda1 = eig.values[0];
    if !(lambda1 > 0.0) {
        return Err(Error::invalid("snapshot set has zero energy"));
    }
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for i in 0..n_modes {
        let lambda = eig.values[i];
        if lambda < EIGEN_FLOOR * lambda1 {
            log::warn!("truncating the basis at {i} modes: eigenvalue {lambda:e} is below {EIGEN_FLOOR:e} lambda_1");
            break;
        }
        // phi_i = (1 / (N_s lambda_i)) sum_j u_j G_ji, then unit weighted norm
        let mut phi = vec![0.0; snapshots.columns[0].len()];
        let s = 1.0 / (ns as f64 * lambda);
        for (j, u) in snapshots.columns.iter().enumerate() {
            let g = eig.vectors[(j, i)] * s;
            for (p, v) in phi.iter_mut().zip(u) {
                *p += g * v;
            }
        }
        for _ in 0..2 {
            for prev in &modes {
                let d = snapshots.inner(prev, &phi);
                for (p, q) in phi.iter_mut().zip(prev) {
                    *p -= d * q;
                }
            }
        }
        let norm = snapshots.inner(&phi, &phi).sqrt();
        for p in phi.iter_mut() {
            *p /= norm;
        }
        modes.push(phi);
    }
    Ok(PodBasis {
        n_cells: snapshots.n_cells,
        n_components: snapshots.n_components,
        weights: snapshots.weights.clone(),
        grid_hash: snapshots.grid_hash.clone(),
        eigenvalues: eig.values,
        modes,
    })
}

#[derive(Serialize, Deserialize)]
struct BasisHeader {
    format: String,
    grid_hash: String,
    n_cells: usize,
    n_components: usize,
    n_modes: usize,
    eigenvalues: Vec<f64>,
}

const BASIS_MAGIC: &str = "dispinn-basis v1";

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.n_cells * self.n_components
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        weighted_inner(&self.weights, a, b)
    }

    /// Coefficients `<phi_i, u>`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        ensure_len("projected field", self.dim(), u.len())?;
        Ok(self.modes.iter().map(|m| self.inner(m, u)).collect())
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        ensure_len("mode coefficients", self.n_modes(), coeffs.len())?;
        let mut u = vec![0.0; self.dim()];
        for (m, a) in self.modes.iter().zip(coeffs) {
            for (x, y) in u.iter_mut().zip(m) {
                *x += a * y;
            }
        }
        Ok(u)
    }

    /// Relative discarded energy `sum_{i > n} lambda_i / sum lambda_i`.
    pub fn truncation_error(&self, n: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total > 0.0 {
            self.eigenvalues.iter().skip(n).sum::<f64>() / total
        } else {
            0.0
        }
    }

    /// The first `n` modes.
    pub fn truncated(&self, n: usize) -> Result<PodBasis> {
        if n == 0 || n > self.n_modes() {
            return Err(Error::invalid(format!("cannot keep {n} of {} modes", self.n_modes())));
        }
        let mut b = self.clone();
        b.modes.truncate(n);
        Ok(b)
    }

    /// Largest `|<phi_i, phi_j> - delta_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n_modes() {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(&self.modes[i], &self.modes[j]) - target).abs());
            }
        }
        worst
    }

    /// Header line with grid hash, mode count and eigenvalues, then the
    /// little-endian blob of eigenvalues, weights and modes.
    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let header = BasisHeader {
            format: BASIS_MAGIC.into(),
            grid_hash: self.grid_hash.clone(),
            n_cells: self.n_cells,
            n_components: self.n_components,
            n_modes: self.n_modes(),
            eigenvalues: self.eigenvalues.clone(),
        };
        let blob = self.eigenvalues.iter().chain(&self.weights).chain(self.modes.iter().flatten()).copied();
        write_blob_doc(w, &header, blob)
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let (h, values): (BasisHeader, _) = read_blob_doc(r)?;
        if h.format != BASIS_MAGIC {
            return Err(Error::Format(format!("unknown basis format {:?}", h.format)));
        }
        let dim = h.n_cells * h.n_components;
        let ne = h.eigenvalues.len();
        if values.len() != ne + h.n_cells + h.n_modes * dim {
            return Err(Error::Format("basis blob length does not match its header".into()));
        }
        Ok(PodBasis {
            n_cells: h.n_cells,
            n_components: h.n_components,
            grid_hash: h.grid_hash,
            eigenvalues: values[..ne].to_vec(),
            weights: values[ne..ne + h.n_cells].to_vec(),
            modes: values[ne + h.n_cells..].chunks(dim).map(<[f64]>::to_vec).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        PodBasis::read_from(std::fs::File::open(path)?)
    }
}
