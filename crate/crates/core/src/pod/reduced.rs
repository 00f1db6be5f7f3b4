use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PodBasis;
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::fv::operators::{convection_operator, divergence_operator, gradient_operator, laplacian_operator};
use crate::fv::{Grid, TransportConfig};
use crate::io::{read_blob_doc, write_blob_doc};
use crate::linalg::{norm_inf, DenseMatrix, Tensor3};

/// Galerkin-projected operators of `M a' = nu D a - C(a) a - B b`, with the
/// optional constraint `P a = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub nu: f64,
    pub m: DenseMatrix,
    pub d: DenseMatrix,
    /// `C[i][j][k] = <phi_i, div(phi_j (x) phi_k)>`; `k` is the convecting mode.
    pub c: Tensor3,
    pub b: Option<DenseMatrix>,
    pub p: Option<DenseMatrix>,
}

/// Velocity and pressure coefficients at a time and parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub time: f64,
    pub nu: f64,
}

impl ReducedState {
    pub fn new(a: Vec<f64>, time: f64, nu: f64) -> Self {
        ReducedState { a, b: Vec::new(), time, nu }
    }
}

/// How `dX/dQ` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducedJacobianMode {
    /// Central differences with step `eps` on each coefficient.
    Fd(f64),
    Analytic,
}

/// Projects the FV mass, diffusion and convection operators onto the modes.
/// Pressure operators `B_ij = <phi_i, grad chi_j>` and
/// `P_ij = <chi_i, div phi_j>` are built when a pressure basis is given.
pub fn project_operators(grid: &Grid, cfg: &TransportConfig, basis_u: &PodBasis, basis_p: Option<&PodBasis>) -> Result<ReducedSystem> {
    let n = grid.n_cells();
    if basis_u.n_cells != n || basis_u.n_components != 2 {
        return Err(Error::invalid("velocity basis must hold two-component fields on the grid"));
    }
    let r = basis_u.n_modes();
    let modes = &basis_u.modes;
    let mut m = DenseMatrix::zeros(r, r);
    let mut d = DenseMatrix::zeros(r, r);
    let lap = laplacian_operator(grid);
    let lap_modes: Vec<Vec<f64>> = modes.iter().map(|phi| apply_per_component(phi, n, |x| lap.matvec(x))).collect::<Result<_>>()?;
    for i in 0..r {
        for j in 0..r {
            m[(i, j)] = basis_u.inner(&modes[i], &modes[j]);
            d[(i, j)] = crate::linalg::dot(&modes[i], &lap_modes[j]);
        }
    }
    let mut c = Tensor3::zeros([r, r, r]);
    for k in 0..r {
        let conv = convection_operator(grid, &modes[k], cfg.convection_coeff)?;
        for j in 0..r {
            let kj = apply_per_component(&modes[j], n, |x| conv.matvec(x))?;
            for i in 0..r {
                c.set(i, j, k, crate::linalg::dot(&modes[i], &kj));
            }
        }
    }
    let (b, p) = match basis_p {
        None => (None, None),
        Some(bp) => {
            if bp.n_cells != n || bp.n_components != 1 {
                return Err(Error::invalid("pressure basis must hold scalar fields on the grid"));
            }
            let grad = gradient_operator(grid);
            let div = divergence_operator(grid);
            let rp = bp.n_modes();
            let mut bm = DenseMatrix::zeros(r, rp);
            let mut pm = DenseMatrix::zeros(rp, r);
            let grads: Vec<Vec<f64>> = bp.modes.iter().map(|chi| grad.matvec(chi)).collect::<Result<_>>()?;
            let divs: Vec<Vec<f64>> = modes.iter().map(|phi| div.matvec(phi)).collect::<Result<_>>()?;
            for i in 0..r {
                for j in 0..rp {
                    bm[(i, j)] = crate::linalg::dot(&modes[i], &grads[j]);
                    pm[(j, i)] = crate::linalg::dot(&bp.modes[j], &divs[i]);
                }
            }
            (Some(bm), Some(pm))
        }
    };
    Ok(ReducedSystem { nu: cfg.nu, m, d, c, b, p })
}

fn apply_per_component(x: &[f64], n: usize, op: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    for comp in x.chunks(n) {
        out.extend(op(comp)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SystemHeader {
    format: String,
    nu: f64,
    n_u: usize,
    n_p: usize,
    pressure: bool,
}

const SYSTEM_MAGIC: &str = "dispinn-reduced v1";

impl ReducedSystem {
    pub fn n_u(&self) -> usize {
        self.m.rows()
    }

    pub fn n_p(&self) -> usize {
        self.b.as_ref().map_or(0, DenseMatrix::cols)
    }

    /// The same operators at another viscosity.
    pub fn with_nu(&self, nu: f64) -> ReducedSystem {
        ReducedSystem { nu, ..self.clone() }
    }

    fn check_state(&self, state: &ReducedState) -> Result<()> {
        ensure_len("velocity coefficients", self.n_u(), state.a.len())?;
        if !state.b.is_empty() || self.b.is_some() {
            ensure_len("pressure coefficients", self.n_p(), state.b.len())?;
        }
        if (state.nu - self.nu).abs() > 1e-12 * self.nu.abs().max(1e-300) {
            return Err(Error::invalid(format!("state viscosity {} does not match the system's {}", state.nu, self.nu)));
        }
        Ok(())
    }

    /// `X(a, b) = M^-1 (nu D a - C(a) a - B b)`.
    pub fn rhs(&self, state: &ReducedState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        self.rhs_unchecked(&state.a, &state.b)
    }

    fn rhs_unchecked(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        let da = self.d.matvec(a)?;
        let ca = self.c.bilinear(a, a)?;
        let mut f: Vec<f64> = da.iter().zip(&ca).map(|(x, y)| self.nu * x - y).collect();
        if let Some(bm) = &self.b {
            for (fi, bi) in f.iter_mut().zip(bm.matvec(b)?) {
                *fi -= bi;
            }
        }
        self.m.lu_solve(&f)
    }

    /// `(R_red1, R_red2) = (a' - X(a, b), P a)`. `R_red2` is empty without `P`.
    pub fn residuals(&self, state: &ReducedState, a_dot: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        ensure_len("coefficient rates", self.n_u(), a_dot.len())?;
        let x = self.rhs(state)?;
        let r1 = a_dot.iter().zip(&x).map(|(d, x)| d - x).collect();
        let r2 = match &self.p {
            Some(p) => p.matvec(&state.a)?,
            None => Vec::new(),
        };
        Ok((r1, r2))
    }

    /// `dX/dQ` with `Q = [a | b]`, an `n_u x (n_u + n_p)` matrix.
    pub fn rhs_jacobian(&self, state: &ReducedState, mode: ReducedJacobianMode) -> Result<DenseMatrix> {
        self.check_state(state)?;
        let (nu_, np) = (self.n_u(), self.n_p());
        let mut jac = DenseMatrix::zeros(nu_, nu_ + np);
        match mode {
            ReducedJacobianMode::Fd(eps) => {
                if !(eps > 0.0) {
                    return Err(Error::invalid("finite-difference step must be positive"));
                }
                let mut q: Vec<f64> = state.a.iter().chain(&state.b).copied().collect();
                for col in 0..nu_ + np {
                    let orig = q[col];
                    q[col] = orig + eps;
                    let up = self.rhs_unchecked(&q[..nu_], &q[nu_..])?;
                    q[col] = orig - eps;
                    let dn = self.rhs_unchecked(&q[..nu_], &q[nu_..])?;
                    q[col] = orig;
                    for row in 0..nu_ {
                        jac[(row, col)] = (up[row] - dn[row]) / (2.0 * eps);
                    }
                }
            }
            ReducedJacobianMode::Analytic => {
                // d/da_m of sum_jk C_ijk a_j a_k = sum_k C_imk a_k + sum_j C_ijm a_j
                let a = &state.a;
                let mut f = DenseMatrix::zeros(nu_, nu_ + np);
                for i in 0..nu_ {
                    for mm in 0..nu_ {
                        let mut v = self.nu * self.d[(i, mm)];
                        for l in 0..nu_ {
                            v -= (self.c.get(i, mm, l) + self.c.get(i, l, mm)) * a[l];
                        }
                        f[(i, mm)] = v;
                    }
                    if let Some(bm) = &self.b {
                        for j in 0..np {
                            f[(i, nu_ + j)] = -bm[(i, j)];
                        }
                    }
                }
                for col in 0..nu_ + np {
                    let x = self.m.lu_solve(&f.column(col))?;
                    for row in 0..nu_ {
                        jac[(row, col)] = x[row];
                    }
                }
            }
        }
        Ok(jac)
    }

    /// Header line, then the little-endian blob `nu, M, D, C, B, P`.
    pub fn write_to(&self, w: impl Write) -> Result<()> {
        let header = SystemHeader {
            format: SYSTEM_MAGIC.into(),
            nu: self.nu,
            n_u: self.n_u(),
            n_p: self.n_p(),
            pressure: self.b.is_some(),
        };
        let mut blob = vec![self.nu];
        blob.extend_from_slice(self.m.values());
        blob.extend_from_slice(self.d.values());
        blob.extend_from_slice(self.c.values());
        for op in [&self.b, &self.p].into_iter().flatten() {
            blob.extend_from_slice(op.values());
        }
        write_blob_doc(w, &header, blob)
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let (h, v): (SystemHeader, Vec<f64>) = read_blob_doc(r)?;
        if h.format != SYSTEM_MAGIC {
            return Err(Error::Format(format!("unknown reduced-system format {:?}", h.format)));
        }
        let (r, rp) = (h.n_u, if h.pressure { h.n_p } else { 0 });
        let expected = 1 + 2 * r * r + r * r * r + 2 * r * rp;
        if v.len() != expected {
            return Err(Error::Format(format!("reduced-system blob holds {} values, expected {expected}", v.len())));
        }
        let mut at = 1;
        let mut take = |k: usize| {
            at += k;
            v[at - k..at].to_vec()
        };
        let m = DenseMatrix::from_vec(r, r, take(r * r))?;
        let d = DenseMatrix::from_vec(r, r, take(r * r))?;
        let c = Tensor3::from_vec([r, r, r], take(r * r * r))?;
        let (b, p) = if h.pressure {
            (Some(DenseMatrix::from_vec(r, rp, take(r * rp))?), Some(DenseMatrix::from_vec(rp, r, take(r * rp))?))
        } else {
            (None, None)
        };
        Ok(ReducedSystem { nu: v[0], m, d, c, b, p })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ReducedSystem::read_from(std::fs::File::open(path)?)
    }
}

/// `X(a, b)` of a reduced system.
pub fn reduced_rhs(sys: &ReducedSystem, state: &ReducedState) -> Result<Vec<f64>> {
    sys.rhs(state)
}

/// `(R_red1, R_red2)` for a state and its coefficient rate.
pub fn reduced_residuals(sys: &ReducedSystem, state: &ReducedState, a_dot: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    sys.residuals(state, a_dot)
}

pub const ROM_MAX_ITERATIONS: usize = 50;
pub const ROM_TOLERANCE: f64 = 1e-10;

/// Implicit-midpoint integration of `a' = X(a, b)` with pressure
/// coefficients held at their initial value. Each step iterates
/// `a1 = a0 + dt X((a0 + a1) / 2)` to an update below `1e-10`, at most 50
/// times. Returns the `n_steps` post-step states.
pub fn rom_march(sys: &ReducedSystem, a0: &ReducedState, dt: f64, n_steps: usize) -> Result<Vec<ReducedState>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("time step must be positive"));
    }
    sys.check_state(a0)?;
    let mut out = Vec::with_capacity(n_steps);
    let mut a = a0.a.clone();
    for step in 0..n_steps {
        let mut next = a.clone();
        let mut update = f64::INFINITY;
        for _ in 0..ROM_MAX_ITERATIONS {
            let mid: Vec<f64> = a.iter().zip(&next).map(|(x, y)| 0.5 * (x + y)).collect();
            let x = sys.rhs_unchecked(&mid, &a0.b)?;
            let cand: Vec<f64> = a.iter().zip(&x).map(|(ai, xi)| ai + dt * xi).collect();
            update = norm_inf(&cand.iter().zip(&next).map(|(p, q)| p - q).collect::<Vec<_>>());
            next = cand;
            if update <= ROM_TOLERANCE * norm_inf(&next).max(1.0) {
                break;
            }
        }
        if !(update <= ROM_TOLERANCE * norm_inf(&next).max(1.0)) {
            return Err(Error::FixedPoint { step, update });
        }
        ensure_finite("reduced state", &next)?;
        a = next;
        out.push(ReducedState { a: a.clone(), b: a0.b.clone(), time: a0.time + (step + 1) as f64 * dt, nu: a0.nu });
    }
    Ok(out)
}
