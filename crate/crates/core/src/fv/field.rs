use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{ensure_finite, ensure_len, Error, Result};

/// Cell-centred multi-component field. Values are stored component-major:
/// entry `c * n_cells + p` is component `c` at cell `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub n_cells: usize,
    pub n_components: usize,
    pub values: Vec<f64>,
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, n_components: usize, time: f64) -> Self {
        Field {
            n_cells: grid.n_cells(),
            n_components,
            values: vec![0.0; grid.n_cells() * n_components],
            time,
            nu: None,
        }
    }

    pub fn from_values(grid: &Grid, n_components: usize, values: Vec<f64>, time: f64) -> Result<Self> {
        ensure_len("field values", grid.n_cells() * n_components, values.len())?;
        ensure_finite("field values", &values)?;
        Ok(Field {
            n_cells: grid.n_cells(),
            n_components,
            values,
            time,
            nu: None,
        })
    }

    /// Square pulse: every component equals `value` on cells whose centroid
    /// lies in `[lo, hi]^2`, zero elsewhere.
    pub fn pulse(grid: &Grid, n_components: usize, lo: f64, hi: f64, value: f64) -> Self {
        let mut f = Field::zeros(grid, n_components, 0.0);
        for p in 0..grid.n_cells() {
            let (x, y) = grid.centroid(p);
            if (lo..=hi).contains(&x) && (lo..=hi).contains(&y) {
                for c in 0..n_components {
                    f.values[c * f.n_cells + p] = value;
                }
            }
        }
        f
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_cells..(c + 1) * self.n_cells]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.values[c * self.n_cells..(c + 1) * self.n_cells]
    }

    pub fn get(&self, c: usize, p: usize) -> f64 {
        self.values[c * self.n_cells + p]
    }

    pub fn max_abs(&self) -> f64 {
        crate::linalg::norm_inf(&self.values)
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    /// Checks the field lives on `grid` with `n_components` and is finite.
    pub fn check(&self, grid: &Grid, n_components: usize) -> Result<()> {
        ensure_len("field cells", grid.n_cells(), self.n_cells)?;
        ensure_len("field components", n_components, self.n_components)?;
        ensure_len("field values", self.n_cells * self.n_components, self.values.len())?;
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field at t = {}", self.time)));
        }
        Ok(())
    }
}
