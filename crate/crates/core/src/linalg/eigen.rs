use super::DenseMatrix;
use crate::error::{ensure_finite, ensure_len, Error, Result};

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
/// Column `i` of `vectors` is the unit eigenvector for `values[i]`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

const SYMMETRY_TOL: f64 = 1e-10;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Symmetric positive semi-definite eigensolver. Negative eigenvalues are
/// clamped to zero; a warning is logged when the clamp is not round-off.
pub fn sym_eig(c: &DenseMatrix) -> Result<SymEigen> {
    let mut eig = jacobi_eigen(c)?;
    let scale = eig.values.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    for v in eig.values.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-12 * scale {
                log::warn!("clamping negative eigenvalue {v:e} of a correlation matrix to zero");
            }
            *v = 0.0;
        }
    }
    Ok(eig)
}

/// Cyclic Jacobi rotations on a symmetric matrix without clamping. Sweeps
/// stop once the off-diagonal Frobenius norm drops below `1e-12 * ||C||_F`.
pub fn jacobi_eigen(c: &DenseMatrix) -> Result<SymEigen> {
    let n = c.rows();
    ensure_len("eigen square matrix", n, c.cols())?;
    ensure_finite("eigen input", c.values())?;
    let max_abs = c.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((c[(i, j)] - c[(j, i)]).abs());
        }
    }
    if asym > SYMMETRY_TOL * max_abs.max(1.0) {
        return Err(Error::Asymmetric(asym));
    }

    let mut a = c.clone();
    // symmetrize exactly so rotations see a symmetric operand
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let norm = a.frobenius();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= OFF_DIAGONAL_TOL * norm || norm == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = cs * akp - sn * akq;
                    a[(k, q)] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = cs * apk - sn * aqk;
                    a[(q, k)] = sn * apk + cs * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = cs * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + cs * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_parallel(v: &[f64], expected: &[f64]) {
        let d: f64 = v.iter().zip(expected).map(|(a, b)| a * b).sum();
        assert!((d.abs() - 1.0).abs() < 1e-12, "{v:?} not parallel to {expected:?}");
    }

    #[test]
    fn diagonal_input() {
        let c = DenseMatrix::diag(&[1.0, 3.0]);
        let e = sym_eig(&c).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        assert_parallel(&e.vectors.column(0), &[0.0, 1.0]);
        assert_parallel(&e.vectors.column(1), &[1.0, 0.0]);
    }

    #[test]
    fn two_by_two_by_hand() {
        let c = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = sym_eig(&c).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_parallel(&e.vectors.column(0), &[h, h]);
        assert_parallel(&e.vectors.column(1), &[h, -h]);
    }

    #[test]
    fn rank_one_outer_product() {
        let v = [0.3, -1.2, 2.0, 0.5];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        let mut c = DenseMatrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                c[(i, j)] = v[i] * v[j];
            }
        }
        let e = sym_eig(&c).unwrap();
        assert!((e.values[0] - n2).abs() < 1e-12 * n2);
        assert!(e.values[1..].iter().all(|&l| l.abs() < 1e-12));
        let unit: Vec<f64> = v.iter().map(|x| x / n2.sqrt()).collect();
        assert_parallel(&e.vectors.column(0), &unit);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let c = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&c), Err(Error::Asymmetric(_))));
    }

    #[test]
    fn negative_eigenvalues_are_clamped() {
        let c = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = sym_eig(&c).unwrap();
        assert_eq!(e.values[1], 0.0);
        let raw = jacobi_eigen(&c).unwrap();
        assert!((raw.values[1] + 1.0).abs() < 1e-14);
    }
}
