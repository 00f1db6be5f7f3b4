use dispinn::fv::{assemble_step, build_grid, ConvectionScheme, Field, Grid, TransportConfig};
use dispinn::linalg::DenseMatrix;

/// Brute-force assembly from cell positions. Faces are enumerated by
/// geometry, and the upwind face value is extrapolated from the upwind
/// centroid with a central-difference gradient that uses 0 outside the box.
pub fn oracle(nx: usize, ny: usize, cfg: &TransportConfig, u_prev: &[Vec<f64>; 2], ulin: (f64, f64)) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (dx, dy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let vol = dx * dy;
    let n = nx * ny;
    let inside = |i: i64, j: i64| i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny;
    let at = |f: &Vec<f64>, i: i64, j: i64| if inside(i, j) { f[j as usize * nx + i as usize] } else { 0.0 };
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; 2];
    for j in 0..ny as i64 {
        for i in 0..nx as i64 {
            let p = j as usize * nx + i as usize;
            a[p][p] += cfg.rho;
            for c in 0..2 {
                b[c][p] += cfg.rho * at(&u_prev[c], i, j);
            }
            // (di, dj, area, distance, normal velocity)
            let faces = [
                (1, 0, dy, dx, ulin.0),
                (-1, 0, dy, dx, -ulin.0),
                (0, 1, dx, dy, ulin.1),
                (0, -1, dx, dy, -ulin.1),
            ];
            for (di, dj, area, dist, un) in faces {
                let (qi, qj) = (i + di, j + dj);
                let s = cfg.dt / vol;
                if !inside(qi, qj) {
                    a[p][p] += s * cfg.rho * cfg.nu * area / (dist / 2.0);
                    continue;
                }
                let q = qj as usize * nx + qi as usize;
                let flux = cfg.convection_coeff * cfg.rho * un * area;
                a[p][p] += s * cfg.rho * cfg.nu * area / dist;
                a[p][q] -= s * cfg.rho * cfg.nu * area / dist;
                if flux >= 0.0 {
                    a[p][p] += s * flux;
                } else {
                    a[p][q] += s * flux;
                }
                if cfg.convection_scheme == ConvectionScheme::LinearUpwind {
                    let (ui, uj) = if flux >= 0.0 { (i, j) } else { (qi, qj) };
                    for c in 0..2 {
                        let f = &u_prev[c];
                        let face = |oi: i64, oj: i64| {
                            if inside(ui + oi, uj + oj) {
                                0.5 * (at(f, ui, uj) + at(f, ui + oi, uj + oj))
                            } else {
                                0.0
                            }
                        };
                        let grad = if di != 0 { (face(1, 0) - face(-1, 0)) / dx } else { (face(0, 1) - face(0, -1)) / dy };
                        // face centre minus upwind centroid, along the face axis
                        let shift = if flux >= 0.0 { 0.5 * dist } else { -0.5 * dist } * (di + dj) as f64;
                        b[c][p] -= s * flux * shift * grad;
                    }
                }
            }
        }
    }
    (a, b)
}

pub fn sample_field(g: &Grid, seed: f64) -> Field {
    let mut f = Field::zeros(g, 2, 0.0);
    for (k, v) in f.values.iter_mut().enumerate() {
        *v = ((k as f64 + 1.0) * 0.731 + seed).sin();
    }
    f
}

pub fn uniform(g: &Grid, vx: f64, vy: f64) -> Field {
    let n = g.n_cells();
    let mut values = vec![vx; 2 * n];
    values[n..].iter_mut().for_each(|v| *v = vy);
    Field::from_values(g, 2, values, 0.0).unwrap()
}

pub fn check_against_oracle(cfg: &TransportConfig) {
    let g = build_grid(3, 3, 1.0, 1.0).unwrap();
    let u_prev = sample_field(&g, 0.2);
    let u_lin = uniform(&g, 1.0, 1.0);
    let sys = assemble_step(&g, cfg, &u_prev, &u_lin).unwrap();
    let prev = [u_prev.component(0).to_vec(), u_prev.component(1).to_vec()];
    let (a, b) = oracle(3, 3, cfg, &prev, (1.0, 1.0));
    let dense = sys.a.to_dense();
    for c in 0..2 {
        for p in 0..9 {
            for q in 0..9 {
                let got = dense[(c * 9 + p, c * 9 + q)];
                assert!((got - a[p][q]).abs() <= 1e-15 * a[p][q].abs().max(1.0), "A[{p},{q}] {got} vs {}", a[p][q]);
            }
            // blocks of different components never couple
            for q in 0..9 {
                assert_eq!(dense[(c * 9 + p, (1 - c) * 9 + q)], 0.0);
            }
            let got = sys.b[c * 9 + p];
            assert!((got - b[c][p]).abs() <= 1e-15 * b[c][p].abs().max(1.0), "b[{c},{p}]");
        }
    }
}

pub fn max_rel_dev(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| (x - y).abs() <= (1e-4 * x.abs().max(y.abs())).max(1e-8))
}

pub fn chain(g: &Grid, cfg: &TransportConfig, k: usize, seed: f64) -> Vec<Field> {
    (0..=k)
        .map(|i| {
            let mut f = sample_field(g, seed + i as f64);
            f.values.iter_mut().for_each(|v| *v = 0.5 + 0.4 * *v);
            f.with_time(i as f64 * cfg.dt)
        })
        .collect()
}
