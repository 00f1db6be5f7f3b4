use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Result};

/// Third-order tensor packed with the last index fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Tensor3 {
            dims,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn from_vec(dims: [usize; 3], values: Vec<f64>) -> Result<Self> {
        ensure_len("tensor values", dims[0] * dims[1] * dims[2], values.len())?;
        Ok(Tensor3 { dims, values })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let o = self.offset(i, j, k);
        self.values[o] = v;
    }

    /// The `i`-th slice `T[i, .., ..]` as a row-major `dims[1] x dims[2]` block.
    pub fn slice(&self, i: usize) -> &[f64] {
        let n = self.dims[1] * self.dims[2];
        &self.values[i * n..(i + 1) * n]
    }

    /// `out_i = x^T T[i, .., ..] y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        ensure_len("tensor left operand", self.dims[1], x.len())?;
        ensure_len("tensor right operand", self.dims[2], y.len())?;
        Ok((0..self.dims[0])
            .map(|i| {
                let s = self.slice(i);
                x.iter()
                    .enumerate()
                    .map(|(j, xj)| xj * s[j * self.dims[2]..(j + 1) * self.dims[2]].iter().zip(y).map(|(c, yk)| c * yk).sum::<f64>())
                    .sum()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_contraction_by_hand() {
        // T[0] = [[1,2],[3,4]], T[1] = [[0,1],[1,0]]
        let t = Tensor3::from_vec([2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let out = t.bilinear(&[1.0, -1.0], &[2.0, 1.0]).unwrap();
        // x^T T0 y = [1,-1]·[4,10] = -6 ; x^T T1 y = [1,-1]·[1,2] = -1
        assert_eq!(out, vec![-6.0, -1.0]);
        assert_eq!(t.get(0, 1, 0), 3.0);
    }
}
