use dispinn::fv::{Field, Grid};
use dispinn::pod::SnapshotSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_snapshots(grid: &Grid, n_components: usize, count: usize, seed: u64) -> SnapshotSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SnapshotSet::new(grid, n_components);
    for _ in 0..count {
        let values: Vec<f64> = (0..grid.n_cells() * n_components).map(|_| rng.gen_range(-1.0..1.0)).collect();
        s.push(&Field::from_values(grid, n_components, values, 0.0).unwrap(), 0.01).unwrap();
    }
    s
}

pub fn frobenius(cols: &[Vec<f64>], s: &SnapshotSet) -> f64 {
    cols.iter().map(|c| s.inner(c, c)).sum::<f64>().sqrt()
}

/// `<phi_i, coeff div(phi_j (x) phi_k)>` summed face by face, with linear
/// face interpolation and no flux through the walls.
pub fn convection_oracle(grid: &Grid, coeff: f64, modes: &[Vec<f64>], i: usize, j: usize, k: usize) -> f64 {
    let n = grid.n_cells();
    let (dx, dy) = (grid.lx / grid.nx as f64, grid.ly / grid.ny as f64);
    let mut total = 0.0;
    for c in 0..2 {
        for jj in 0..grid.ny {
            for ii in 0..grid.nx {
                let p = jj * grid.nx + ii;
                // east and north faces, each shared with one neighbour
                for (axis, q, area) in [(0, (ii + 1 < grid.nx).then(|| p + 1), dy), (1, (jj + 1 < grid.ny).then(|| p + grid.nx), dx)] {
                    let Some(q) = q else { continue };
                    let w = 0.5 * (modes[k][axis * n + p] + modes[k][axis * n + q]);
                    let phi = 0.5 * (modes[j][c * n + p] + modes[j][c * n + q]);
                    let flux = coeff * w * phi * area;
                    total += modes[i][c * n + p] * flux - modes[i][c * n + q] * flux;
                }
            }
        }
    }
    total
}
