use dispinn::experiments::{benchmark_initial_condition, fom_trajectory, RomTask, RomTaskConfig};
use dispinn::fv::{build_grid, ConvectionScheme, Field, TransportConfig};
use dispinn::pod::{pod, project_operators, PodBasis, ReducedState, ReducedSystem, SnapshotSet};
use proptest::prelude::*;

mod common;
use common::pod::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn modes_are_orthonormal_and_full_rank_reconstructs(seed in any::<u64>(), nx in 2usize..6, ny in 2usize..6, count in 2usize..8) {
        let grid = build_grid(nx, ny, 1.0, 1.5).unwrap();
        let snaps = random_snapshots(&grid, 2, count, seed);
        let basis = pod(&snaps, count).unwrap();
        prop_assert!(basis.orthonormality_error() <= 1e-8);
        let err: Vec<Vec<f64>> = snaps
            .columns
            .iter()
            .map(|u| {
                let back = basis.reconstruct(&basis.project(u).unwrap()).unwrap();
                back.iter().zip(u).map(|(a, b)| a - b).collect()
            })
            .collect();
        prop_assert!(frobenius(&err, &snaps) <= 1e-8 * frobenius(&snaps.columns, &snaps));
    }

    #[test]
    fn truncation_error_equals_the_discarded_energy(seed in any::<u64>(), count in 3usize..10, keep in 1usize..3) {
        let grid = build_grid(4, 3, 1.0, 1.0).unwrap();
        let snaps = random_snapshots(&grid, 2, count, seed);
        let basis = pod(&snaps, count).unwrap().truncated(keep).unwrap();
        let resid: Vec<Vec<f64>> = snaps
            .columns
            .iter()
            .map(|u| {
                let back = basis.reconstruct(&basis.project(u).unwrap()).unwrap();
                back.iter().zip(u).map(|(a, b)| b - a).collect()
            })
            .collect();
        let measured = frobenius(&resid, &snaps).powi(2) / frobenius(&snaps.columns, &snaps).powi(2);
        let predicted = basis.truncation_error(keep);
        prop_assert!((measured - predicted).abs() <= 1e-6 * predicted.max(1e-300), "{measured} vs {predicted}");
    }
}

#[test]
fn eigenvalues_are_sorted_and_non_negative() {
    let grid = build_grid(5, 5, 1.0, 1.0).unwrap();
    let basis = pod(&random_snapshots(&grid, 2, 6, 3), 6).unwrap();
    assert!(basis.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(basis.eigenvalues.iter().all(|l| *l >= -1e-12));
    assert_eq!(basis.truncation_error(6), 0.0);
    assert!((basis.truncation_error(0) - 1.0).abs() < 1e-14);
}

#[test]
fn mode_counts_are_validated() {
    let grid = build_grid(3, 3, 1.0, 1.0).unwrap();
    let snaps = random_snapshots(&grid, 2, 4, 1);
    assert!(pod(&snaps, 0).is_err());
    assert!(pod(&snaps, 5).is_err());
    assert!(pod(&snaps, 4).unwrap().truncated(5).is_err());
}

#[test]
fn rank_deficient_sets_are_truncated() {
    let grid = build_grid(3, 3, 1.0, 1.0).unwrap();
    let mut snaps = random_snapshots(&grid, 1, 2, 9);
    let sum: Vec<f64> = snaps.columns[0].iter().zip(&snaps.columns[1]).map(|(a, b)| a + b).collect();
    snaps.push(&Field::from_values(&grid, 1, sum, 0.0).unwrap(), 0.01).unwrap();
    let basis = pod(&snaps, 3).unwrap();
    assert_eq!(basis.n_modes(), 2);
    assert!(basis.orthonormality_error() <= 1e-8);
}

#[test]
fn convection_tensor_matches_the_quadrature_oracle() {
    let grid = build_grid(5, 5, 1.0, 0.8).unwrap();
    for (seed, r) in [(1, 2), (2, 3), (3, 3)] {
        let basis = pod(&random_snapshots(&grid, 2, 4, seed), r).unwrap();
        let cfg = TransportConfig { convection_coeff: 0.5, ..TransportConfig::default() };
        let sys = project_operators(&grid, &cfg, &basis, None).unwrap();
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    let oracle = convection_oracle(&grid, 0.5, &basis.modes, i, j, k);
                    assert!((sys.c.get(i, j, k) - oracle).abs() <= 1e-10, "C[{i}{j}{k}] = {} vs {oracle}", sys.c.get(i, j, k));
                }
            }
        }
    }
}

#[test]
fn diffusion_block_is_symmetric_negative_definite() {
    let grid = build_grid(5, 5, 1.0, 1.0).unwrap();
    let basis = pod(&random_snapshots(&grid, 2, 5, 4), 4).unwrap();
    let sys = project_operators(&grid, &TransportConfig::default(), &basis, None).unwrap();
    assert!(sys.d.max_abs_diff(&sys.d.transpose()) < 1e-12);
    for m in 0..4 {
        assert!(sys.d[(m, m)] < 0.0);
    }
}

/// `|a'_FD - X(a)|` over the window, relative to `|a'_FD|`, for a basis of
/// `n` modes built from a central-convection FOM run.
fn rate_mismatch(basis: &PodBasis, sys: &ReducedSystem, fields: &[Field], dt: f64) -> f64 {
    let mut worst = 0.0_f64;
    for w in fields.windows(3).step_by(10) {
        let a_m = basis.project(&w[0].values).unwrap();
        let a = basis.project(&w[1].values).unwrap();
        let a_p = basis.project(&w[2].values).unwrap();
        let rate: Vec<f64> = a_p.iter().zip(&a_m).map(|(p, m)| (p - m) / (2.0 * dt)).collect();
        let x = sys.rhs(&ReducedState::new(a, w[1].time, sys.nu)).unwrap();
        let num: f64 = rate.iter().zip(&x).map(|(r, x)| (r - x).powi(2)).sum::<f64>().sqrt();
        let den: f64 = rate.iter().map(|r| r * r).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    worst
}

#[test]
fn reduced_rates_approach_the_fom_rates_as_modes_grow() {
    let grid = dispinn::experiments::benchmark_grid();
    let cfg = TransportConfig { nu: 0.01, dt: 0.001, convection_scheme: ConvectionScheme::Central, ..TransportConfig::default() };
    let fields = fom_trajectory(&grid, &cfg, &benchmark_initial_condition(&grid), 400).unwrap();
    let snaps = SnapshotSet::from_fields(&grid, fields.iter().step_by(5), 0.01).unwrap();
    let full = pod(&snaps, 20).unwrap();
    let errs: Vec<f64> = [5, 10, 20]
        .iter()
        .map(|&n| {
            let b = full.truncated(n).unwrap();
            let sys = project_operators(&grid, &cfg, &b, None).unwrap();
            rate_mismatch(&b, &sys, &fields, cfg.dt)
        })
        .collect();
    eprintln!("rate mismatch 5/10/20 modes: {errs:?}");
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn galerkin_error_does_not_grow_with_modes() {
    let task = RomTask::build(RomTaskConfig::default()).unwrap();
    let errs: Vec<f64> = [5, 10, 20]
        .iter()
        .map(|&n| dispinn::experiments::max(&task.truncated(n).unwrap().galerkin_errors(0.01).unwrap()))
        .collect();
    assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
}

#[test]
fn basis_files_round_trip() {
    let grid = build_grid(4, 4, 1.0, 1.0).unwrap();
    let basis = pod(&random_snapshots(&grid, 2, 5, 7), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("basis.pod");
    basis.save(&path).unwrap();
    assert_eq!(PodBasis::load(&path).unwrap(), basis);
    let sys = project_operators(&grid, &TransportConfig::default(), &basis, Some(&pod(&random_snapshots(&grid, 1, 3, 8), 2).unwrap())).unwrap();
    let path = dir.path().join("sys.rom");
    sys.save(&path).unwrap();
    assert_eq!(ReducedSystem::load(&path).unwrap(), sys);
}

#[test]
fn corrupt_basis_files_are_rejected() {
    let grid = build_grid(3, 3, 1.0, 1.0).unwrap();
    let basis = pod(&random_snapshots(&grid, 2, 3, 2), 2).unwrap();
    let mut buf = Vec::new();
    basis.write_to(&mut buf).unwrap();
    assert!(PodBasis::read_from(&buf[..buf.len() - 3]).is_err());
    let mut bad = buf.clone();
    bad[5] = b'#';
    assert!(PodBasis::read_from(&bad[..]).is_err());
}
