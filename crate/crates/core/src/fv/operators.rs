//! Cell-integrated finite-volume operators acting on one scalar component.
//!
//! Row `p` of each operator is the face sum over cell `p` without division
//! by `V_p`, so `x^T K y` is the volume-weighted inner product of `x` with
//! the operator applied to `y`.

use super::{Face, Grid, Neighbor};
use crate::error::{ensure_len, Result};
use crate::linalg::CsrMatrix;

/// `sum_f A_f (grad phi)_f . n_f` with central differences and a
/// homogeneous Dirichlet boundary at half-cell distance.
pub fn laplacian_operator(grid: &Grid) -> CsrMatrix {
    let mut t = Vec::with_capacity(grid.n_cells() * 5);
    for p in 0..grid.n_cells() {
        for face in Face::ALL {
            let (area, d) = (grid.area(face), grid.spacing(face));
            match grid.neighbor(p, face) {
                Neighbor::Cell(q) => {
                    t.push((p, q, area / d));
                    t.push((p, p, -area / d));
                }
                Neighbor::Dirichlet => t.push((p, p, -area / (0.5 * d))),
            }
        }
    }
    CsrMatrix::from_triplets(grid.n_cells(), grid.n_cells(), &t).expect("indices in range")
}

/// `coeff * sum_f (w_f . A_f) phi_f` with linear interpolation of both the
/// convecting velocity `w` (two components, component-major) and `phi`.
/// Boundary faces carry no flux.
pub fn convection_operator(grid: &Grid, w: &[f64], coeff: f64) -> Result<CsrMatrix> {
    let n = grid.n_cells();
    ensure_len("convecting velocity", 2 * n, w.len())?;
    let mut t = Vec::with_capacity(n * 5);
    for p in 0..n {
        for face in Face::ALL {
            if let Neighbor::Cell(q) = grid.neighbor(p, face) {
                let vel = &w[face.axis() * n..(face.axis() + 1) * n];
                let flux = coeff * face.sign() * 0.5 * (vel[p] + vel[q]) * grid.area(face);
                t.push((p, p, 0.5 * flux));
                t.push((p, q, 0.5 * flux));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Integrated gradient `sum_f chi_f A_f` of a scalar, rows component-major
/// (`2 n x n`). Boundary faces use the cell value (zero normal gradient).
pub fn gradient_operator(grid: &Grid) -> CsrMatrix {
    let n = grid.n_cells();
    let mut t = Vec::with_capacity(n * 8);
    for p in 0..n {
        for face in Face::ALL {
            let row = face.axis() * n + p;
            let a = face.sign() * grid.area(face);
            match grid.neighbor(p, face) {
                Neighbor::Cell(q) => {
                    t.push((row, p, 0.5 * a));
                    t.push((row, q, 0.5 * a));
                }
                Neighbor::Dirichlet => t.push((row, p, a)),
            }
        }
    }
    CsrMatrix::from_triplets(2 * n, n, &t).expect("indices in range")
}

/// Integrated divergence `sum_f u_f . A_f` of a two-component field
/// (`n x 2 n`), with zero velocity on boundary faces.
pub fn divergence_operator(grid: &Grid) -> CsrMatrix {
    let n = grid.n_cells();
    let mut t = Vec::with_capacity(n * 8);
    for p in 0..n {
        for face in Face::ALL {
            if let Neighbor::Cell(q) = grid.neighbor(p, face) {
                let base = face.axis() * n;
                let a = face.sign() * grid.area(face);
                t.push((p, base + p, 0.5 * a));
                t.push((p, base + q, 0.5 * a));
            }
        }
    }
    CsrMatrix::from_triplets(n, 2 * n, &t).expect("indices in range")
}
