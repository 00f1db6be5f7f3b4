use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    No,
    Yes,
}

/// `C = alpha * op(A) * op(B) + beta * C` on row-major slices.
///
/// `a` is stored as `a_rows x a_cols`, `b` as `b_rows x b_cols`, `c` as
/// `m x n` where `m`, `n` follow from the transposition flags.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    ta: Transpose,
    tb: Transpose,
    alpha: f64,
    a: &[f64],
    a_rows: usize,
    a_cols: usize,
    b: &[f64],
    b_rows: usize,
    b_cols: usize,
    beta: f64,
    c: &mut [f64],
) {
    let (m, k, rsa, csa) = match ta {
        Transpose::No => (a_rows, a_cols, a_cols as isize, 1),
        Transpose::Yes => (a_cols, a_rows, 1, a_cols as isize),
    };
    let (kb, n, rsb, csb) = match tb {
        Transpose::No => (b_rows, b_cols, b_cols as isize, 1),
        Transpose::Yes => (b_cols, b_rows, 1, b_cols as isize),
    };
    assert_eq!(k, kb, "gemm inner dimensions differ");
    assert_eq!(a.len(), a_rows * a_cols);
    assert_eq!(b.len(), b_rows * b_cols);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the assertions above bound every index the kernel can touch.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        ensure_len("dense matrix values", rows * cols, values.len())?;
        Ok(DenseMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            ensure_len("dense matrix row", cols, r.len())?;
            values.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        ensure_len("matmul inner dimension", self.cols, other.rows)?;
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(
            Transpose::No,
            Transpose::No,
            1.0,
            &self.values,
            self.rows,
            self.cols,
            &other.values,
            other.rows,
            other.cols,
            0.0,
            &mut out.values,
        );
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("dense matvec operand", self.cols, x.len())?;
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_len("dense transposed matvec operand", self.rows, x.len())?;
        let mut y = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (yc, a) in y.iter_mut().zip(self.row(r)) {
                *yc += a * xr;
            }
        }
        Ok(y)
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Solves `self * x = b` by LU with partial pivoting.
    pub fn lu_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        ensure_len("lu square matrix", self.rows, self.cols)?;
        ensure_len("lu right-hand side", self.rows, b.len())?;
        let n = self.rows;
        let mut a = self.values.clone();
        let mut x = b.to_vec();
        let scale = self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
                .unwrap();
            if a[p * n + k].abs() <= f64::EPSILON * scale * n as f64 || a[p * n + k] == 0.0 {
                return Err(Error::Singular);
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                x.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                for c in k..n {
                    a[i * n + c] -= f * a[k * n + c];
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for c in k + 1..n {
                acc -= a[k * n + c] * x[c];
            }
            x[k] = acc / a[k * n + k];
        }
        Ok(x)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.values[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.values[r * self.cols + c]
    }
}
