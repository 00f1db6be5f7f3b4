use crate::error::{ensure_len, Result};
use crate::fv::BlockJacobian;

/// Mean squared error over the listed rows, all entries.
pub fn loss_data(pred: &[Vec<f64>], actual: &[Vec<f64>], rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        log::warn!("data loss requested over an empty row set");
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for &r in rows {
        ensure_len("data row width", actual[r].len(), pred[r].len())?;
        sum += pred[r].iter().zip(&actual[r]).map(|(p, a)| (p - a).powi(2)).sum::<f64>();
        count += pred[r].len();
    }
    Ok(sum / count as f64)
}

/// Mean of squared residual entries over all rows (entry-mean convention).
pub fn loss_eqn(residuals: &[Vec<f64>]) -> f64 {
    let count: usize = residuals.iter().map(Vec::len).sum();
    if count == 0 {
        return 0.0;
    }
    residuals.iter().flat_map(|r| r.iter()).map(|v| v * v).sum::<f64>() / count as f64
}

/// The detached factor `[2 R J]_detached / (N_eqn n)` of the corrected
/// physics loss, stored per field.
///
/// The surrogate `L_Dis = sum_j <coeff_j, U_j>` has the same value
/// sensitivity to `U` as `L_eqn` when `J` is fresh, so its gradient through
/// the network equals the gradient of `L_eqn` although `R` and `J` come from
/// outside the differentiation graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DetachedFactor {
    pub coeff: Vec<Vec<f64>>,
}

impl DetachedFactor {
    /// Builds the factor from residuals `R_1..R_K` and the block Jacobian of
    /// the chain `U_0..U_K`.
    pub fn new(residuals: &[Vec<f64>], jac: &BlockJacobian) -> Result<Self> {
        let entries: usize = residuals.iter().map(Vec::len).sum();
        let w: Vec<Vec<f64>> = residuals
            .iter()
            .map(|r| r.iter().map(|v| 2.0 * v / entries.max(1) as f64).collect())
            .collect();
        Ok(DetachedFactor { coeff: jac.vjp(&w)? })
    }

    /// Surrogate loss value at the predicted fields.
    pub fn value(&self, u_pred: &[Vec<f64>]) -> Result<f64> {
        ensure_len("detached factor fields", self.coeff.len(), u_pred.len())?;
        let mut v = 0.0;
        for (c, u) in self.coeff.iter().zip(u_pred) {
            ensure_len("detached factor field", c.len(), u.len())?;
            v += c.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(v)
    }
}

/// Surrogate `sum (2 R J)_detached . U_pred / (N_eqn n)`; its gradient with
/// respect to `U_pred` is the detached factor.
pub fn loss_dis(residuals: &[Vec<f64>], jac: &BlockJacobian, u_pred: &[Vec<f64>]) -> Result<(f64, DetachedFactor)> {
    let factor = DetachedFactor::new(residuals, jac)?;
    Ok((factor.value(u_pred)?, factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_loss_hand_values() {
        let a = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert_eq!(loss_data(&a, &a, &[0, 1]).unwrap(), 0.0);
        assert_eq!(loss_data(&[vec![1.0, 1.0]], &[vec![0.0, 0.0]], &[0]).unwrap(), 1.0);
        let p = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        assert_eq!(loss_data(&p, &a, &[0, 1]).unwrap(), 1.25);
        assert_eq!(loss_data(&p, &a, &[]).unwrap(), 0.0);
    }

    #[test]
    fn eqn_loss_is_an_entry_mean() {
        assert_eq!(loss_eqn(&[vec![1.0, 0.0], vec![0.0, 0.0]]), 0.25);
        assert_eq!(loss_eqn(&[]), 0.0);
    }

    #[test]
    fn zero_residual_gives_a_zero_factor() {
        use crate::fv::JacobianBlock;
        use crate::linalg::CsrMatrix;
        let jac = BlockJacobian {
            n_fields: 2,
            block_size: 2,
            blocks: vec![
                JacobianBlock { row: 1, col: 0, matrix: CsrMatrix::identity(2, -1.0) },
                JacobianBlock { row: 1, col: 1, matrix: CsrMatrix::identity(2, 3.0) },
            ],
        };
        let (v, f) = loss_dis(&[vec![0.0, 0.0]], &jac, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(v, 0.0);
        assert!(f.coeff.iter().flatten().all(|c| *c == 0.0));
        // R = [1, 0] over 2 entries: w = [1, 0], coeff_0 = -w, coeff_1 = 3 w
        let f = DetachedFactor::new(&[vec![1.0, 0.0]], &jac).unwrap();
        assert_eq!(f.coeff, vec![vec![-1.0, 0.0], vec![3.0, 0.0]]);
    }
}
