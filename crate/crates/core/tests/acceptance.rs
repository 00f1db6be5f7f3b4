//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance` runs all ten; `cargo test --test
//! acceptance -- 4 6` runs a subset.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use common::fv::{chain, check_against_oracle, max_rel_dev};
use dispinn::daemon::{read_frame, write_frame, DaemonClient, Frame, Problem, Request, ServeOptions, Server, WireArray, WireCsr};
use dispinn::experiments::{
    benchmark_grid, benchmark_initial_condition, fom_errors, fom_trajectory, max, median, train_fom, NetworkConfig, RomTask,
    RomTaskConfig,
};
use dispinn::fom::{FomTrainConfig, LossReport, PhysicsMode};
use dispinn::fv::{assemble_step, build_grid, jacobian, step_budget, ConvectionScheme, Field, JacobianMode, Linearization, TransportConfig, TransportProblem};
use dispinn::io::SnapshotFile;
use dispinn::pod::{pod, project_operators};
use dispinn::rom::RomTrainConfig;

const FOM_SEEDS: [u64; 3] = [1, 2, 3];
const ROM_SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
const BAND_TIMES: [f64; 3] = [0.025, 0.075, 0.125];
const EXTRAPOLATION_TIME: f64 = 0.325;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Variant {
    /// Data at t = 0 only, corrected physics.
    Sparse,
    /// Data at t = 0 only, physics without the correction term.
    SparseUncorrected,
    /// Data at t = 0, 0.05, 0.1, corrected physics.
    ThreeData,
    /// Data at t = 0, 0.05, 0.1, no physics.
    ThreeDataOnly,
}

impl Variant {
    fn config(self) -> FomTrainConfig {
        let three = vec![0, 50, 100];
        match self {
            Variant::Sparse => FomTrainConfig::default(),
            Variant::SparseUncorrected => FomTrainConfig { mode: PhysicsMode::Uncorrected, ..Default::default() },
            Variant::ThreeData => FomTrainConfig { data_indices: three, ..Default::default() },
            Variant::ThreeDataOnly => FomTrainConfig { data_indices: three, mode: PhysicsMode::DataOnly, ..Default::default() },
        }
    }
}

struct FomRun {
    /// Max-abs error at the band times, then at the extrapolation time.
    errors: Vec<f64>,
    final_l_eqn: f64,
    l_eqn_trend: (f64, f64),
}

/// Runs shared between criteria, computed on first use.
struct Context {
    bench: Vec<Field>,
    fom_runs: HashMap<(u64, Variant), FomRun>,
    rom_task: Option<RomTask>,
}

impl Context {
    fn new() -> Self {
        let grid = benchmark_grid();
        let bench = fom_trajectory(&grid, &TransportConfig::default(), &benchmark_initial_condition(&grid), 350).unwrap();
        Context { bench, fom_runs: HashMap::new(), rom_task: None }
    }

    fn fom(&mut self, seed: u64, variant: Variant) -> &FomRun {
        let bench = &self.bench;
        self.fom_runs.entry((seed, variant)).or_insert_with(|| {
            let start = Instant::now();
            let problem = TransportProblem::new(benchmark_grid(), TransportConfig::default()).unwrap();
            let (model, reports) = train_fom(bench, &NetworkConfig::default(), &variant.config(), seed, problem, |_, _| Ok(())).unwrap();
            let times = [BAND_TIMES.as_slice(), &[EXTRAPOLATION_TIME]].concat();
            let run = FomRun {
                errors: fom_errors(&model, bench, &times).unwrap(),
                final_l_eqn: reports.last().unwrap().l_eqn,
                l_eqn_trend: trend(&reports),
            };
            eprintln!(
                "  fom seed {seed} {variant:?}: errors {:.3?}, final L_eqn {:.2e} ({:.0} s)",
                run.errors,
                run.final_l_eqn,
                start.elapsed().as_secs_f64()
            );
            run
        })
    }

    fn rom_task(&mut self) -> &RomTask {
        self.rom_task.get_or_insert_with(|| RomTask::build(RomTaskConfig::default()).unwrap())
    }
}

/// Median L_eqn over the first and the last tenth of the epochs.
fn trend(reports: &[LossReport]) -> (f64, f64) {
    let tenth = (reports.len() / 10).max(1);
    let l: Vec<f64> = reports.iter().map(|r| r.l_eqn).collect();
    (median(&l[..tenth]), median(&l[l.len() - tenth..]))
}

fn fv_correctness(_: &mut Context) -> Outcome {
    let start = Instant::now();
    let cfg = TransportConfig { nu: 0.01, dt: 0.001, ..Default::default() };
    check_against_oracle(&cfg);
    check_against_oracle(&TransportConfig { convection_scheme: ConvectionScheme::Upwind, ..cfg.clone() });
    check_against_oracle(&TransportConfig { rho: 1.7, nu: 0.05, dt: 0.01, ..cfg });

    let grid = benchmark_grid();
    let cfg = TransportConfig::default();
    let fields = fom_trajectory(&grid, &cfg, &benchmark_initial_condition(&grid), 350).unwrap();
    let worst = fields
        .windows(2)
        .map(|w| step_budget(&grid, &cfg, &w[0], &w[1], cfg.dt).unwrap().relative_error())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    Outcome::new(
        worst <= 1e-8 && within(elapsed, 5.0),
        format!("3x3 oracle exact; worst budget error {worst:.1e} over 350 steps; {:.1} s", elapsed.as_secs_f64()),
    )
}

fn jacobian_suite(_: &mut Context) -> Outcome {
    let start = Instant::now();
    let mut agree = true;
    let mut two_blocks = true;
    for (n, linearization, scheme) in [
        (3, Linearization::Mixed, ConvectionScheme::LinearUpwind),
        (4, Linearization::Explicit, ConvectionScheme::LinearUpwind),
        (5, Linearization::Mixed, ConvectionScheme::LinearUpwind),
        (5, Linearization::Mixed, ConvectionScheme::Central),
    ] {
        let g = build_grid(n, n, 1.0, 1.0).unwrap();
        let cfg = TransportConfig { dt: 0.01, linearization, convection_scheme: scheme, ..Default::default() };
        let problem = TransportProblem::new(g.clone(), cfg.clone()).unwrap();
        let u = chain(&g, &cfg, 3, 0.1 * n as f64);
        let ja = jacobian(&problem, &u, JacobianMode::Analytic, 1e-6).unwrap();
        let jf = jacobian(&problem, &u, JacobianMode::FiniteDifference, 1e-6).unwrap();
        for row in 1..=3 {
            two_blocks &= ja.row_pattern(row) == vec![row - 1, row] && jf.row_pattern(row) == vec![row - 1, row];
            for col in [row - 1, row] {
                agree &= max_rel_dev(&ja.block(row, col).unwrap().to_dense(), &jf.block(row, col).unwrap().to_dense());
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        agree && two_blocks && within(elapsed, 10.0),
        format!("analytic vs FD within 1e-4: {agree}; two blocks per row: {two_blocks}; {:.1} s", elapsed.as_secs_f64()),
    )
}

fn gradient_identity(_: &mut Context) -> Outcome {
    use common::fom::{dot, fd_physics_gradient, seeded_trainer, toy};
    use common::rom::{fd_gradient, pressure_oracle, rel_err, set_unit_pressure, trainer};

    let start = Instant::now();
    let mut fom_worst = 0.0_f64;
    for seed in 0..20 {
        let (problem, bench) = toy(if seed % 2 == 0 { 0.5 } else { 0.0 });
        let cfg = FomTrainConfig { lambda2: 0.0, epochs: 1, physics_indices: vec![0, 2, 4, 6], ..Default::default() };
        let mut t = seeded_trainer(problem, &bench, cfg, seed);
        let g = t.gradient().unwrap();
        let model = t.model().clone();
        let fd = fd_physics_gradient(&mut t, &model);
        let diff: Vec<f64> = g.physics_grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
        fom_worst = fom_worst.max(dot(&diff, &diff).sqrt() / dot(&fd, &fd).sqrt());
    }

    let mut mom_worst = 0.0_f64;
    let mut pressure_worst = 0.0_f64;
    for seed in 0..20 {
        let cfg = RomTrainConfig { lambda2: 0.0, lambda3: 0.0, k_int: 1, ..Default::default() };
        let mut t = trainer(seed, 1 + seed as usize % 3, 0, cfg.clone());
        let g = t.gradient().unwrap();
        mom_worst = mom_worst.max(rel_err(&g.physics_grad, &fd_gradient(&mut t, &cfg)));

        let cfg = RomTrainConfig { lambda1: 0.0, lambda2: 1.0, lambda3: 0.0, ..Default::default() };
        let mut t = trainer(seed, 2, 1, cfg);
        set_unit_pressure(&mut t);
        let g = t.gradient().unwrap();
        let exact = pressure_oracle(&t);
        let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let gap = g.physics_grad.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pressure_worst = pressure_worst.max(gap / scale);
    }
    let elapsed = start.elapsed();
    Outcome::new(
        fom_worst <= 1e-4 && mom_worst <= 1e-4 && pressure_worst <= 1e-12 && within(elapsed, 30.0),
        format!(
            "20 seeds; worst relative error FOM {fom_worst:.1e}, ROM momentum {mom_worst:.1e}, ROM pressure {pressure_worst:.1e}; {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn per_time_medians(ctx: &mut Context, variant: Variant) -> Vec<f64> {
    let runs: Vec<Vec<f64>> = FOM_SEEDS.iter().map(|&s| ctx.fom(s, variant).errors.clone()).collect();
    (0..BAND_TIMES.len()).map(|k| median(&runs.iter().map(|e| e[k]).collect::<Vec<_>>())).collect()
}

fn fom_bands(ctx: &mut Context) -> Outcome {
    let sparse = per_time_medians(ctx, Variant::Sparse);
    let three = per_time_medians(ctx, Variant::ThreeData);
    let data_only = per_time_medians(ctx, Variant::ThreeDataOnly);
    let sparse_ok = sparse.iter().all(|e| *e <= 0.26);
    let three_ok = three.iter().all(|e| *e <= 0.13);
    let below = three.iter().zip(&data_only).all(|(a, b)| a < b);
    Outcome::new(
        sparse_ok && three_ok && below,
        format!(
            "median max-abs at {BAND_TIMES:?}: data at 0 {sparse:.3?} (<= 0.26), data at 0/0.05/0.1 {three:.3?} (<= 0.13), data-only {data_only:.3?}"
        ),
    )
}

fn correction_ordering(ctx: &mut Context) -> Outcome {
    let mut wins = 0;
    let mut pairs = Vec::new();
    let mut trend_ok = true;
    for seed in FOM_SEEDS {
        let (with, trend_with) = { let r = ctx.fom(seed, Variant::Sparse); (r.final_l_eqn, r.l_eqn_trend) };
        let (without, trend_without) = { let r = ctx.fom(seed, Variant::SparseUncorrected); (r.final_l_eqn, r.l_eqn_trend) };
        wins += usize::from(with < without);
        trend_ok &= trend_with.1 < trend_with.0 && trend_without.1 < trend_without.0;
        pairs.push(format!("{with:.1e} vs {without:.1e}"));
    }
    Outcome::new(
        wins >= 2,
        format!("final L_eqn with vs without correction: {}; {wins}/3 seeds; L_eqn trends down in every run: {trend_ok}", pairs.join(", ")),
    )
}

fn extrapolation_ordering(ctx: &mut Context) -> Outcome {
    let k = BAND_TIMES.len();
    let mut all = true;
    let mut pairs = Vec::new();
    for seed in FOM_SEEDS {
        let physics = ctx.fom(seed, Variant::ThreeData).errors[k];
        let data_only = ctx.fom(seed, Variant::ThreeDataOnly).errors[k];
        all &= physics < data_only;
        pairs.push(format!("{physics:.3} vs {data_only:.3}"));
    }
    Outcome::new(all, format!("max-abs at t = {EXTRAPOLATION_TIME}, physics+data vs data-only: {}", pairs.join(", ")))
}

fn pod_suite(_: &mut Context) -> Outcome {
    use common::pod::{convection_oracle, frobenius, random_snapshots};

    let start = Instant::now();
    let (mut ortho, mut recon, mut identity, mut tensor) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for seed in 0..20u64 {
        let grid = build_grid(2 + seed as usize % 4, 2 + (seed as usize / 4) % 4, 1.0, 1.5).unwrap();
        let count = 2 + seed as usize % 6;
        let snaps = random_snapshots(&grid, 2, count, seed);
        let basis = pod(&snaps, count).unwrap();
        ortho = ortho.max(basis.orthonormality_error());
        let residual = |b: &dispinn::pod::PodBasis| -> Vec<Vec<f64>> {
            snaps
                .columns
                .iter()
                .map(|u| b.reconstruct(&b.project(u).unwrap()).unwrap().iter().zip(u).map(|(a, b)| b - a).collect())
                .collect()
        };
        let total = frobenius(&snaps.columns, &snaps);
        recon = recon.max(frobenius(&residual(&basis), &snaps) / total);
        if count >= 3 {
            let keep = 1 + seed as usize % 2;
            let truncated = basis.truncated(keep).unwrap();
            let measured = (frobenius(&residual(&truncated), &snaps) / total).powi(2);
            let predicted = truncated.truncation_error(keep);
            identity = identity.max((measured - predicted).abs() / predicted);
        }
    }
    let grid = build_grid(5, 5, 1.0, 0.8).unwrap();
    for (seed, r) in [(1, 2), (2, 3), (3, 3)] {
        let basis = pod(&random_snapshots(&grid, 2, 4, seed), r).unwrap();
        let cfg = TransportConfig { convection_coeff: 0.5, ..Default::default() };
        let sys = project_operators(&grid, &cfg, &basis, None).unwrap();
        for i in 0..r {
            for j in 0..r {
                for k in 0..r {
                    tensor = tensor.max((sys.c.get(i, j, k) - convection_oracle(&grid, 0.5, &basis.modes, i, j, k)).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        ortho <= 1e-8 && recon <= 1e-8 && identity <= 1e-6 && tensor <= 1e-10 && within(elapsed, 30.0),
        format!(
            "orthonormality {ortho:.1e}, reconstruction {recon:.1e}, truncation identity {identity:.1e}, C tensor {tensor:.1e}; {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn rom_baseline(ctx: &mut Context) -> Outcome {
    let task = ctx.rom_task();
    let mut ok = true;
    let mut lines = Vec::new();
    for &nu in &task.config.nus {
        let errs: Vec<f64> = [5, 10, 20].iter().map(|&n| max(&task.truncated(n).unwrap().galerkin_errors(nu).unwrap())).collect();
        ok &= errs[0] >= errs[1] && errs[1] >= errs[2];
        lines.push(format!("nu {nu}: {errs:.4?}"));
    }
    Outcome::new(ok, format!("max relative L2 for 5/10/20 modes, {}", lines.join("; ")))
}

fn rom_ordering(ctx: &mut Context) -> Outcome {
    let task = ctx.rom_task();
    let net = NetworkConfig::default();
    let nus = task.config.nus.clone();
    let train_max = |f: &dyn Fn(f64) -> Vec<f64>| nus.iter().map(|&nu| max(&f(nu))).fold(0.0, f64::max);
    let galerkin = train_max(&|nu| task.galerkin_errors(nu).unwrap());
    let (mut dispinn, mut data_only, mut held_out_wins) = (Vec::new(), Vec::new(), 0);
    for seed in ROM_SEEDS {
        let mut errs = [PhysicsMode::Corrected, PhysicsMode::DataOnly].map(|mode| {
            let cfg = RomTrainConfig { mode, ..Default::default() };
            let (model, _) = task.train(&net, &cfg, seed, task.training_solver().unwrap(), |_, _| Ok(())).unwrap();
            (train_max(&|nu| task.network_errors(&model, nu).unwrap()), max(&task.network_errors(&model, task.config.nu_test).unwrap()))
        });
        eprintln!("  rom seed {seed}: DisPINN {:.4?}, data-only {:.4?} (training, held-out)", errs[0], errs[1]);
        held_out_wins += usize::from(errs[0].1 < errs[1].1);
        let [a, b] = &mut errs;
        dispinn.push(a.0);
        data_only.push(b.0);
    }
    let (d, o) = (median(&dispinn), median(&data_only));
    let ordered = galerkin <= d && d <= o;
    let n = ROM_SEEDS.count();
    Outcome::new(
        ordered && held_out_wins >= 8,
        format!(
            "medians POD-Galerkin {galerkin:.4} <= DisPINN {d:.4} <= data-only {o:.4}: {ordered}; held-out nu DisPINN < data-only in {held_out_wins}/{n} seeds (needs 8)"
        ),
    )
}

fn daemon_transparency(ctx: &mut Context) -> Outcome {
    let start = Instant::now();
    let problem = TransportProblem::new(benchmark_grid(), TransportConfig::default()).unwrap();
    let server = Server::bind(&"127.0.0.1:0".parse().unwrap(), Problem::Fom(problem.clone()), ServeOptions::default()).unwrap();
    let ep = server.local_endpoint().unwrap();
    let handle = thread::spawn(move || server.serve().unwrap());
    let mut client = DaemonClient::connect(&ep).unwrap();

    let cfg = FomTrainConfig { epochs: 1, ..Default::default() };
    let net = NetworkConfig::default();
    let (local_model, local) = train_fom(&ctx.bench, &net, &cfg, 7, problem, |_, _| Ok(())).unwrap();
    let (remote_model, remote) = train_fom(&ctx.bench, &net, &cfg, 7, &mut client, |_, _| Ok(())).unwrap();
    client.shutdown().unwrap();
    handle.join().unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
    let losses = local.len() == remote.len()
        && local.iter().zip(&remote).all(|(a, b)| {
            close(a.l_data, b.l_data) && close(a.l_eqn, b.l_eqn) && close(a.l_dis, b.l_dis) && close(a.total, b.total)
        });
    let params = local_model.net.theta == remote_model.net.theta;

    let codec = codec_round_trips(&ctx.bench);
    let elapsed = start.elapsed();
    Outcome::new(
        losses && codec && within(elapsed, 60.0),
        format!("epoch losses within 1e-12: {losses} (parameters identical: {params}); codec round trips byte-identical: {codec}; {:.1} s", elapsed.as_secs_f64()),
    )
}

fn codec_round_trips(bench: &[Field]) -> bool {
    let values = [0.0, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE, f64::MAX, -1e-300, 5e-324];
    let wire = WireArray::vector(&values);
    let arrays = wire.decode().unwrap().iter().map(|v| v.to_bits()).eq(values.iter().map(|v| v.to_bits()));

    let grid = benchmark_grid();
    let a = assemble_step(&grid, &TransportConfig::default(), &bench[0], &bench[1]).unwrap().a;
    let csr = WireCsr::encode(&a).decode().unwrap() == a;

    let request = Request { id: 3, cmd: "residual".into(), payload: serde_json::json!({ "u_all": WireArray::rows(&[bench[0].values.clone()]).unwrap() }) };
    let bytes = serde_json::to_vec(&request).unwrap();
    let mut framed = Vec::new();
    write_frame(&mut framed, &bytes).unwrap();
    let frames = match read_frame(framed.as_slice(), usize::MAX).unwrap() {
        Frame::Body(body) => body == bytes && serde_json::to_vec(&serde_json::from_slice::<Request>(&body).unwrap()).unwrap() == bytes,
        _ => false,
    };

    let dir = tempfile::tempdir().unwrap();
    let (first, second) = (dir.path().join("a.field"), dir.path().join("b.field"));
    SnapshotFile::new(&grid, 0.001, bench[..5].to_vec()).unwrap().save(&first).unwrap();
    SnapshotFile::load(&first).unwrap().save(&second).unwrap();
    let files = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();

    arrays && csr && frames && files
}

type Criterion = (u32, &'static str, fn(&mut Context) -> Outcome);

const CRITERIA: [Criterion; 10] = [
    (1, "FV correctness", fv_correctness),
    (2, "Jacobian suite", jacobian_suite),
    (3, "gradient identity", gradient_identity),
    (4, "FOM training bands", fom_bands),
    (5, "correction ordering", correction_ordering),
    (6, "extrapolation ordering", extrapolation_ordering),
    (7, "POD suite", pod_suite),
    (8, "POD-Galerkin monotonicity", rom_baseline),
    (9, "ROM DisPINN ordering", rom_ordering),
    (10, "daemon transparency", daemon_transparency),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut ctx = Context::new();
    let mut failed = Vec::new();
    for (id, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&mut ctx)))
            .unwrap_or_else(|e| Outcome::new(false, format!("panicked: {}", panic_message(&e))));
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict}  {name}: {} [{:.0} s]", outcome.detail, start.elapsed().as_secs_f64());
        if !outcome.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}
