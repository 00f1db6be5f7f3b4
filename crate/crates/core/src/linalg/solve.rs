use super::{dot, norm_inf, CsrMatrix};
use crate::error::{ensure_finite, ensure_len, Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Absolute tolerance on the infinity norm of `b - A x`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 * n`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub restarts: usize,
}

/// Solves `A x = b` with Jacobi-preconditioned BiCGStab, restarting the
/// shadow residual on breakdown. Convergence is judged on the true residual.
pub fn solve_sparse(a: &CsrMatrix, b: &[f64], opts: SolverOptions) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.rows();
    ensure_len("square matrix", n, a.cols())?;
    ensure_len("right-hand side", n, b.len())?;
    ensure_finite("right-hand side", b)?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));

    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |v: &[f64], out: &mut [f64]| {
        for ((o, x), s) in out.iter_mut().zip(v).zip(&inv_diag) {
            *o = x * s;
        }
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut res = norm_inf(&r);
    let mut stats = SolveStats {
        iterations: 0,
        residual: res,
        restarts: 0,
    };
    if res <= opts.tol {
        return Ok((x, stats));
    }

    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut ax = vec![0.0; n];

    let true_residual = |x: &[f64], ax: &mut [f64], r: &mut [f64]| {
        a.matvec_into(x, ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        norm_inf(r)
    };

    while stats.iterations < max_iter {
        stats.iterations += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || !rho_new.is_finite() {
            restart(&mut r_hat, &r, &mut p, &mut v, &mut stats);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precondition(&p, &mut p_hat);
        a.matvec_into(&p_hat, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            restart(&mut r_hat, &r, &mut p, &mut v, &mut stats);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm_inf(&s) <= opts.tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            res = true_residual(&x, &mut ax, &mut r);
            stats.residual = res;
            if res <= opts.tol {
                return Ok((x, stats));
            }
            restart(&mut r_hat, &r, &mut p, &mut v, &mut stats);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        precondition(&s, &mut s_hat);
        a.matvec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm_inf(&r);
        stats.residual = res;
        if !res.is_finite() {
            return Err(Error::Breakdown {
                iterations: stats.iterations,
                residual: res,
            });
        }
        if res <= opts.tol {
            res = true_residual(&x, &mut ax, &mut r);
            stats.residual = res;
            if res <= opts.tol {
                return Ok((x, stats));
            }
            restart(&mut r_hat, &r, &mut p, &mut v, &mut stats);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        if omega == 0.0 {
            restart(&mut r_hat, &r, &mut p, &mut v, &mut stats);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
        }
    }
    stats.residual = true_residual(&x, &mut ax, &mut r);
    Err(Error::NotConverged {
        iterations: stats.iterations,
        residual: stats.residual,
    })
}

fn restart(r_hat: &mut [f64], r: &[f64], p: &mut [f64], v: &mut [f64], stats: &mut SolveStats) {
    r_hat.copy_from_slice(r);
    p.iter_mut().for_each(|x| *x = 0.0);
    v.iter_mut().for_each(|x| *x = 0.0);
    stats.restarts += 1;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::identity(5, 1.0);
        let b = [1.0, -2.0, 3.5, 0.0, 7.0];
        let (x, _) = solve_sparse(&a, &b, SolverOptions::default()).unwrap();
        assert_eq!(x, b.to_vec());
    }

    #[test]
    fn diagonal_two_by_two() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        let (x, _) = solve_sparse(&a, &[2.0, 8.0], SolverOptions::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonally_dominant_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20;
        let mut trip = Vec::new();
        let mut dense = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i != j && rng.gen_bool(0.3) {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    off += v.abs();
                    trip.push((i, j, v));
                    dense[(i, j)] = v;
                }
            }
            let d = off + 1.0 + rng.gen_range(0.0..1.0);
            trip.push((i, i, d));
            dense[(i, i)] = d;
        }
        let a = CsrMatrix::from_triplets(n, n, &trip).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, stats) = solve_sparse(&a, &b, SolverOptions { tol: 1e-13, max_iter: None }).unwrap();
        let oracle = dense.lu_solve(&b).unwrap();
        for (xi, oi) in x.iter().zip(&oracle) {
            assert!((xi - oi).abs() < 1e-9, "{xi} vs {oi}");
        }
        assert!(stats.residual <= 1e-13);
    }

    #[test]
    fn non_convergence_reports_iterations() {
        // Singular matrix with inconsistent right-hand side.
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let err = solve_sparse(&a, &[1.0, 0.0], SolverOptions { tol: 1e-12, max_iter: Some(30) }).unwrap_err();
        match err {
            Error::NotConverged { iterations, residual } => {
                assert_eq!(iterations, 30);
                assert!(residual > 1e-12);
            }
            Error::Breakdown { .. } => {}
            other => panic!("unexpected error {other}"),
        }
    }
}
