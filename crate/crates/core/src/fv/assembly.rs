//! Implicit-Euler assembly of one transport step.
//!
//! Each cell balance is multiplied by `dt / V_p`, so row `p` of component
//! `c` reads
//!
//! ```text
//! (rho - dt S_p) u_p + (dt / V_p) sum_f [conv_f + diff_f] = rho u^n_p + dt S_u - (dt / V_p) sum_f corr_f
//! ```
//!
//! With zero convection, zero diffusivity and no sources, `A = rho I` and
//! `b = rho u^n`. Unknowns are ordered component-major: entry
//! `c * n_cells + p`.

use serde::{Deserialize, Serialize};

use super::{ConvectionScheme, Face, Field, Grid, Linearization, Neighbor, TransportConfig};
use crate::error::{ensure_len, Error, Result};
use crate::linalg::CsrMatrix;

/// Maximum number of transported components per cell.
pub const MAX_COMPONENTS: usize = 4;

/// Sparse `A` and dense `b` of one implicit step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub n_cells: usize,
    pub n_components: usize,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.n_cells * self.n_components
    }
}

/// `R = A phi - b` together with the system it was evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBundle {
    pub r: Vec<f64>,
    pub system: LinearSystem,
    /// Index `n + 1` of the field the residual was evaluated at.
    pub step: usize,
    /// `dR / dU^{n+1}`, when requested.
    pub jac_current: Option<CsrMatrix>,
    /// `dR / dU^n`, when requested.
    pub jac_previous: Option<CsrMatrix>,
}

/// Coefficients of one scalar row, shared by every component of a cell.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellRow {
    pub diag: f64,
    pub off: [(usize, f64); 4],
    pub n_off: usize,
    pub rhs: [f64; MAX_COMPONENTS],
}

impl CellRow {
    pub fn neighbors(&self) -> &[(usize, f64)] {
        &self.off[..self.n_off]
    }

    /// Residual of this row for component `c` of `u_next`.
    pub fn residual(&self, u_next: &Field, c: usize, p: usize) -> f64 {
        let base = c * u_next.n_cells;
        let mut acc = self.diag * u_next.values[base + p];
        for &(q, a) in self.neighbors() {
            acc += a * u_next.values[base + q];
        }
        acc - self.rhs[c]
    }
}

pub(crate) fn check_inputs(grid: &Grid, cfg: &TransportConfig, u_prev: &Field, u_lin: &Field) -> Result<()> {
    cfg.validate()?;
    if u_prev.n_components == 0 || u_prev.n_components > MAX_COMPONENTS {
        return Err(Error::invalid(format!(
            "transported field must have 1..={MAX_COMPONENTS} components, got {}",
            u_prev.n_components
        )));
    }
    u_prev.check(grid, u_prev.n_components)?;
    u_lin.check(grid, 2)
}

/// Face-normal convecting mass flux through `face` of cell `p`.
fn mass_flux(grid: &Grid, cfg: &TransportConfig, u_lin: &Field, p: usize, q: usize, face: Face) -> f64 {
    let vel = u_lin.component(face.axis());
    cfg.convection_coeff * cfg.rho * face.sign() * 0.5 * (vel[p] + vel[q]) * grid.area(face)
}

/// Gauss-linear gradient of `phi` at cell `p` along `axis`; boundary faces
/// take the Dirichlet value 0.
fn gradient(grid: &Grid, phi: &[f64], p: usize, axis: usize) -> f64 {
    let (plus, minus) = if axis == 0 { (Face::East, Face::West) } else { (Face::North, Face::South) };
    let face_value = |f: Face| match grid.neighbor(p, f) {
        Neighbor::Cell(q) => 0.5 * (phi[p] + phi[q]),
        Neighbor::Dirichlet => 0.0,
    };
    (face_value(plus) - face_value(minus)) / grid.spacing(plus)
}

/// Row coefficients and right-hand sides of cell `p`.
pub(crate) fn cell_row(
    grid: &Grid,
    cfg: &TransportConfig,
    u_prev: &Field,
    u_lin: &Field,
    dt: f64,
    p: usize,
) -> CellRow {
    let nc = u_prev.n_components;
    let scale = dt / grid.cell_volume;
    let mut row = CellRow {
        diag: cfg.rho - dt * cfg.sp,
        off: [(0, 0.0); 4],
        n_off: 0,
        rhs: [0.0; MAX_COMPONENTS],
    };
    for c in 0..nc {
        row.rhs[c] = cfg.rho * u_prev.get(c, p) + dt * cfg.su;
    }

    for face in Face::ALL {
        let area = grid.area(face);
        let d = grid.spacing(face);
        match grid.neighbor(p, face) {
            Neighbor::Cell(q) => {
                let flux = mass_flux(grid, cfg, u_lin, p, q, face);
                let diff = cfg.rho * cfg.nu * area / d;
                let mut diag = diff;
                let mut off = -diff;
                let upwind = if flux >= 0.0 { p } else { q };
                let central = cfg.convection_scheme == ConvectionScheme::Central;
                match cfg.linearization {
                    Linearization::Mixed if central => {
                        diag += 0.5 * flux;
                        off += 0.5 * flux;
                    }
                    Linearization::Mixed => {
                        diag += flux.max(0.0);
                        off += flux.min(0.0);
                    }
                    Linearization::Explicit => {
                        for c in 0..nc {
                            let face_value = if central {
                                0.5 * (u_prev.get(c, p) + u_prev.get(c, q))
                            } else {
                                u_prev.get(c, upwind)
                            };
                            row.rhs[c] -= scale * flux * face_value;
                        }
                    }
                }
                if cfg.convection_scheme == ConvectionScheme::LinearUpwind {
                    // displacement from the upwind centroid to the face centre
                    let disp = if flux >= 0.0 { face.sign() } else { -face.sign() } * 0.5 * d;
                    for c in 0..nc {
                        let g = gradient(grid, u_prev.component(c), upwind, face.axis());
                        row.rhs[c] -= scale * flux * disp * g;
                    }
                }
                row.diag += scale * diag;
                row.off[row.n_off] = (q, scale * off);
                row.n_off += 1;
            }
            Neighbor::Dirichlet => {
                // zero wall velocity: no convective flux, diffusion to value 0
                row.diag += scale * cfg.rho * cfg.nu * area / (0.5 * d);
            }
        }
    }
    row
}

/// Assembles the step `u_prev -> u^{n+1}` with convecting field `u_lin`
/// and time step `dt`.
pub fn assemble_with_dt(
    grid: &Grid,
    cfg: &TransportConfig,
    u_prev: &Field,
    u_lin: &Field,
    dt: f64,
) -> Result<LinearSystem> {
    check_inputs(grid, cfg, u_prev, u_lin)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let n = grid.n_cells();
    let nc = u_prev.n_components;
    let mut rows = Vec::with_capacity(n);
    for p in 0..n {
        rows.push(cell_row(grid, cfg, u_prev, u_lin, dt, p));
    }

    let mut indptr = Vec::with_capacity(n * nc + 1);
    let mut indices = Vec::with_capacity(n * nc * 5);
    let mut values = Vec::with_capacity(n * nc * 5);
    let mut b = vec![0.0; n * nc];
    indptr.push(0);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
    for c in 0..nc {
        for (p, row) in rows.iter().enumerate() {
            entries.clear();
            entries.push((p, row.diag));
            entries.extend_from_slice(row.neighbors());
            entries.sort_by_key(|&(q, _)| q);
            for &(q, v) in &entries {
                indices.push(c * n + q);
                values.push(v);
            }
            indptr.push(indices.len());
            b[c * n + p] = row.rhs[c];
        }
    }
    if values.iter().chain(&b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assembled system".into()));
    }
    Ok(LinearSystem {
        n_cells: n,
        n_components: nc,
        a: CsrMatrix::from_raw(n * nc, n * nc, indptr, indices, values)?,
        b,
    })
}

/// Assembles one implicit step with the configured `dt`. Pass `u_prev` as
/// `u_lin` for the usual lagged-velocity linearization.
pub fn assemble_step(grid: &Grid, cfg: &TransportConfig, u_prev: &Field, u_lin: &Field) -> Result<LinearSystem> {
    assemble_with_dt(grid, cfg, u_prev, u_lin, cfg.dt)
}

/// Evaluates `R = A phi - b`.
pub fn residual(sys: &LinearSystem, phi: &Field) -> Result<ResidualBundle> {
    ensure_len("residual field", sys.dim(), phi.values.len())?;
    let mut r = sys.a.matvec(&phi.values)?;
    for (ri, bi) in r.iter_mut().zip(&sys.b) {
        *ri -= bi;
    }
    Ok(ResidualBundle {
        r,
        system: sys.clone(),
        step: 0,
        jac_current: None,
        jac_previous: None,
    })
}

/// Discrete balance of one step, per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    /// `sum_p V rho (u^{n+1} - u^n)`.
    pub accumulation: Vec<f64>,
    /// `dt` times the net diffusive inflow through Dirichlet faces.
    pub boundary_flux: Vec<f64>,
    /// `dt` times the integrated source.
    pub source: Vec<f64>,
    /// `sum_p V rho (|u^n| + |u^{n+1}|)`, the reference magnitude.
    pub scale: Vec<f64>,
}

impl Budget {
    /// Largest relative imbalance over components.
    pub fn relative_error(&self) -> f64 {
        (0..self.accumulation.len())
            .map(|c| {
                let gap = (self.accumulation[c] - self.boundary_flux[c] - self.source[c]).abs();
                if self.scale[c] > 0.0 { gap / self.scale[c] } else { gap }
            })
            .fold(0.0, f64::max)
    }
}

/// Global budget of the step `u_prev -> u_next`, computed from boundary
/// fluxes and sources only. Interior fluxes cancel and do not enter.
pub fn step_budget(grid: &Grid, cfg: &TransportConfig, u_prev: &Field, u_next: &Field, dt: f64) -> Result<Budget> {
    u_prev.check(grid, u_prev.n_components)?;
    u_next.check(grid, u_prev.n_components)?;
    let nc = u_prev.n_components;
    let v = grid.cell_volume;
    let mut budget = Budget {
        accumulation: vec![0.0; nc],
        boundary_flux: vec![0.0; nc],
        source: vec![0.0; nc],
        scale: vec![0.0; nc],
    };
    for c in 0..nc {
        let (old, new) = (u_prev.component(c), u_next.component(c));
        for p in 0..grid.n_cells() {
            budget.accumulation[c] += v * cfg.rho * (new[p] - old[p]);
            budget.scale[c] += v * cfg.rho * (new[p].abs() + old[p].abs());
            budget.source[c] += dt * v * (cfg.su + cfg.sp * new[p]);
            for face in Face::ALL {
                if grid.neighbor(p, face) == Neighbor::Dirichlet {
                    let d = grid.spacing(face);
                    budget.boundary_flux[c] += dt * cfg.rho * cfg.nu * grid.area(face) * (0.0 - new[p]) / (0.5 * d);
                }
            }
        }
    }
    Ok(budget)
}

/// Largest cell Courant number `|u| dt / dx` of a velocity field.
pub fn cfl_number(grid: &Grid, u: &Field, dt: f64) -> f64 {
    (0..grid.n_cells())
        .map(|p| (u.get(0, p).abs() / grid.dx + u.get(1, p).abs() / grid.dy) * dt)
        .fold(0.0, f64::max)
}
