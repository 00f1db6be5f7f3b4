use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use dispinn::daemon::{DaemonClient, Endpoint, Problem, ServeOptions, Server};
use dispinn::error::{Error, Result};
use dispinn::experiments::{benchmark_initial_condition, fom_errors, fom_trajectory, max, train_fom as train_fom_with, RomTask};
use dispinn::fom::{predict_fields, LossReport};
use dispinn::fv::{Field, TransportProblem};
use dispinn::io::{relative_l2, LossLog, SnapshotFile};
use dispinn::nn::Model;
use dispinn::pod::{rom_march, PodBasis, ReducedState, ReducedSystem};
use dispinn::rom::RomGradient;

use crate::config::RunConfig;

/// Times at which the FOM network's max-abs error is summarized.
const REPORT_TIMES: [f64; 4] = [0.025, 0.075, 0.125, 0.325];

fn out_dir(out: Option<&Path>, default: &str) -> Result<PathBuf> {
    let dir = out.map_or_else(|| PathBuf::from(default), Path::to_path_buf);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

enum Solver {
    InProc,
    Daemon(Endpoint),
}

fn parse_solver(s: &str) -> Result<Solver> {
    if s == "inproc" {
        return Ok(Solver::InProc);
    }
    if !s.starts_with("daemon://") {
        return Err(Error::InvalidArgument(format!("--solver must be inproc or daemon://..., got {s:?}")));
    }
    Ok(Solver::Daemon(s.parse()?))
}

/// Connects and checks that the daemon holds the same problem.
fn connect(cfg: &RunConfig, ep: &Endpoint, expected: Problem) -> Result<DaemonClient> {
    let client = DaemonClient::connect_with_timeout(ep, Duration::from_secs_f64(cfg.daemon.timeout_secs))?;
    if client.problem() != expected.hash() {
        return Err(Error::InvalidArgument(format!(
            "daemon at {ep} serves problem {} but this configuration is {}",
            client.problem(),
            expected.hash()
        )));
    }
    Ok(client)
}

fn loss_log(path: &Path) -> Result<LossLog<BufWriter<File>>> {
    LossLog::new(create(path)?)
}

fn progress(r: &LossReport, every: usize) {
    if r.epoch % every == 0 {
        log::info!("epoch {:>5}  total {:.4e}  l_data {:.4e}  l_eqn {:.4e}", r.epoch, r.total, r.l_data, r.l_eqn);
    }
}

pub fn fom_run(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    if cfg.fom.n_steps == 0 {
        return Err(Error::InvalidArgument("fom.n_steps is 0: nothing to do".into()));
    }
    let grid = cfg.build_grid()?;
    let fields = fom_trajectory(&grid, &cfg.transport, &benchmark_initial_condition(&grid), cfg.fom.n_steps)?;
    let path = out.map_or_else(|| PathBuf::from("fom.field"), Path::to_path_buf);
    SnapshotFile::new(&grid, cfg.transport.dt, fields)?.save(&path)?;
    println!("wrote {} steps to {}", cfg.fom.n_steps, path.display());
    Ok(())
}

fn build_task(cfg: &RunConfig) -> Result<RomTask> {
    RomTask::build_on(cfg.build_grid()?, cfg.pod.clone())
}

fn system_path(dir: &Path, nu: f64) -> PathBuf {
    dir.join(format!("nu_{nu}.rom"))
}

pub fn pod_build(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let dir = out_dir(out, "pod")?;
    let task = build_task(cfg)?;
    task.basis.save(dir.join("basis.pod"))?;
    for sys in &task.systems.systems {
        sys.save(system_path(&dir, sys.nu))?;
    }
    let mut energy = create(&dir.join("energy.csv"))?;
    writeln!(energy, "mode,eigenvalue,truncation_error")?;
    for (i, l) in task.basis.eigenvalues.iter().enumerate() {
        writeln!(energy, "{},{l},{}", i + 1, task.basis.truncation_error(i + 1))?;
    }
    energy.flush()?;
    println!("wrote {} modes and {} systems to {}", task.n_modes(), task.systems.systems.len(), dir.display());
    Ok(())
}

pub fn rom_run(cfg: &RunConfig, artifacts: &Path, out: Option<&Path>) -> Result<()> {
    let dir = out_dir(out, "rom")?;
    let grid = cfg.build_grid()?;
    let basis = PodBasis::load(artifacts.join("basis.pod"))?;
    if basis.grid_hash != grid.hash() {
        return Err(Error::InvalidArgument("the basis was built on a different grid".into()));
    }
    let u0 = benchmark_initial_condition(&grid);
    let stride = cfg.pod.snapshot_stride;
    for nu in cfg.pod.nus.iter().chain([&cfg.pod.nu_test]) {
        let sys = ReducedSystem::load(system_path(artifacts, *nu))?;
        let a0 = ReducedState::new(basis.project(&u0.values)?, 0.0, *nu);
        let traj = rom_march(&sys, &a0, cfg.pod.dt, cfg.pod.n_steps())?;
        let fields = std::iter::once(a0)
            .chain(traj)
            .enumerate()
            .step_by(stride)
            .map(|(k, s)| Field::from_values(&grid, 2, basis.reconstruct(&s.a)?, k as f64 * cfg.pod.dt))
            .collect::<Result<Vec<_>>>()?;
        let path = dir.join(format!("galerkin_nu_{nu}.field"));
        SnapshotFile::new(&grid, cfg.pod.dt * stride as f64, fields)?.save(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn train_fom(cfg: &RunConfig, solver: &str, out: Option<&Path>, log: Option<&Path>) -> Result<()> {
    let dir = out_dir(out, "train-fom")?;
    let grid = cfg.build_grid()?;
    let bench = fom_trajectory(&grid, &cfg.transport, &benchmark_initial_condition(&grid), cfg.fom.n_steps)?;
    let mut log_file = loss_log(&log.map_or_else(|| dir.join("loss.csv"), Path::to_path_buf))?;
    let hook = |r: &LossReport, _: &Model| {
        progress(r, 500);
        log_file.append(r)
    };
    let problem = TransportProblem::new(grid.clone(), cfg.transport.clone())?;
    let train = &cfg.training.fom;
    let (model, _) = match parse_solver(solver)? {
        Solver::InProc => train_fom_with(&bench, &cfg.network, train, cfg.seed, problem, hook)?,
        Solver::Daemon(ep) => {
            let client = connect(cfg, &ep, Problem::Fom(problem))?;
            train_fom_with(&bench, &cfg.network, train, cfg.seed, client, hook)?
        }
    };
    log_file.flush()?;
    model.save(dir.join("model.json"))?;
    let times: Vec<f64> = bench.iter().map(|f| f.time).collect();
    let pred = predict_fields(&model, &bench[0], &times)?;
    SnapshotFile::new(&grid, cfg.transport.dt, pred)?.save(dir.join("prediction.field"))?;
    let errs = fom_errors(&model, &bench, &times)?;
    let mut csv = create(&dir.join("errors.csv"))?;
    writeln!(csv, "time,series,value")?;
    for (t, e) in times.iter().zip(&errs) {
        writeln!(csv, "{t},max_abs,{e}")?;
    }
    csv.flush()?;
    let t_end = times.last().copied().unwrap_or(0.0);
    for t in REPORT_TIMES.into_iter().filter(|t| *t <= t_end + 1e-12) {
        println!("max-abs error at t = {t}: {:.4}", fom_errors(&model, &bench, &[t])?[0]);
    }
    Ok(())
}

pub fn train_rom(cfg: &RunConfig, solver: &str, out: Option<&Path>, log: Option<&Path>) -> Result<()> {
    let dir = out_dir(out, "train-rom")?;
    let task = build_task(cfg)?;
    let mut log_file = loss_log(&log.map_or_else(|| dir.join("loss.csv"), Path::to_path_buf))?;
    let hook = |g: &RomGradient, _: &Model| {
        progress(&g.report, 500);
        log_file.append(&g.report)
    };
    let train = &cfg.training.rom;
    let (model, _) = match parse_solver(solver)? {
        Solver::InProc => task.train(&cfg.network, train, cfg.seed, task.training_solver()?, hook)?,
        Solver::Daemon(ep) => {
            let client = connect(cfg, &ep, Problem::Reduced(task.training_solver()?))?;
            task.train(&cfg.network, train, cfg.seed, client, hook)?
        }
    };
    log_file.flush()?;
    model.save(dir.join("model.json"))?;
    let mut csv = create(&dir.join("errors.csv"))?;
    writeln!(csv, "time,series,value")?;
    let times: Vec<f64> = task.references[0].fields.iter().map(|f| f.time).collect();
    for nu in cfg.pod.nus.iter().chain([&cfg.pod.nu_test]) {
        let net = task.network_errors(&model, *nu)?;
        let gal = task.galerkin_errors(*nu)?;
        for ((t, a), b) in times.iter().zip(&net).zip(&gal) {
            writeln!(csv, "{t},dispinn_nu_{nu},{a}")?;
            writeln!(csv, "{t},galerkin_nu_{nu},{b}")?;
        }
        println!("nu = {nu}: max relative L2 network {:.4}, POD-Galerkin {:.4}", max(&net), max(&gal));
    }
    csv.flush()?;
    Ok(())
}

pub fn eval(pred: &Path, reference: &Path, out: Option<&Path>) -> Result<()> {
    let p = SnapshotFile::load(pred)?;
    let r = SnapshotFile::load(reference)?;
    if (p.nx, p.ny, p.n_components, p.fields.len()) != (r.nx, r.ny, r.n_components, r.fields.len()) {
        return Err(Error::InvalidArgument(format!(
            "shapes differ: {}x{}x{} with {} rows vs {}x{}x{} with {} rows",
            p.nx,
            p.ny,
            p.n_components,
            p.fields.len(),
            r.nx,
            r.ny,
            r.n_components,
            r.fields.len()
        )));
    }
    let mut text = String::from("time,relative_l2\n");
    let mut worst = 0.0_f64;
    for (a, b) in p.fields.iter().zip(&r.fields) {
        let e = relative_l2(&a.values, &b.values)?;
        worst = worst.max(e);
        text.push_str(&format!("{},{e}\n", b.time));
    }
    text.push_str(&format!("max,{worst}\n"));
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn serve(cfg: &RunConfig, reduced: bool, listen: Option<&str>) -> Result<()> {
    let ep: Endpoint = listen.unwrap_or(&cfg.daemon.endpoint).parse()?;
    let problem = if reduced {
        let task = build_task(cfg)?;
        Problem::Reduced(task.training_solver()?)
    } else {
        Problem::Fom(TransportProblem::new(cfg.build_grid()?, cfg.transport.clone())?)
    };
    let server = Server::bind(&ep, problem, ServeOptions { max_frame_bytes: cfg.daemon.max_frame_bytes })?;
    println!("listening on {}", server.local_endpoint()?);
    std::io::stdout().flush()?;
    let stats = server.serve()?;
    println!("served {} requests over {} connections", stats.requests, stats.connections);
    Ok(())
}
