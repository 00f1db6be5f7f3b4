mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

/// Finite-volume benchmark, POD-Galerkin reduced models and DisPINN training.
#[derive(Parser)]
#[command(name = "dispinn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// `inproc`, or `daemon://host:port` / `daemon://unix:PATH`.
    #[arg(long, default_value = "inproc")]
    solver: String,
    /// Loss log CSV; defaults to `loss.csv` in the output directory.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemKind {
    Fom,
    Reduced,
}

#[derive(Subcommand)]
enum Command {
    /// March the benchmark and write the snapshot file.
    FomRun(Common),
    /// Build the POD basis and projected systems of the reduced task.
    PodBuild(Common),
    /// March the POD-Galerkin systems written by `pod-build`.
    RomRun {
        #[command(flatten)]
        common: Common,
        /// Directory written by `pod-build`.
        #[arg(long)]
        artifacts: PathBuf,
    },
    /// Train the time-to-field network on the benchmark.
    TrainFom(TrainArgs),
    /// Train the reduced-coefficient network on the reduced task.
    TrainRom(TrainArgs),
    /// Relative L2 error per time instant between two snapshot files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref", value_name = "REF")]
        reference: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve residuals and Jacobians to remote trainers.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "fom")]
        problem: ProblemKind,
        /// Overrides the configured endpoint (`host:port` or `unix:PATH`).
        #[arg(long)]
        listen: Option<String>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, String> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let echo = serde_json::to_string_pretty(&cfg).expect("config serializes");
    eprintln!("resolved configuration:\n{echo}");
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), String> {
    let fail = |e: dispinn::error::Error| e.to_string();
    match cli.command {
        Command::FomRun(c) => commands::fom_run(&resolve(&c)?, c.out.as_deref()).map_err(fail),
        Command::PodBuild(c) => commands::pod_build(&resolve(&c)?, c.out.as_deref()).map_err(fail),
        Command::RomRun { common, artifacts } => commands::rom_run(&resolve(&common)?, &artifacts, common.out.as_deref()).map_err(fail),
        Command::TrainFom(a) => commands::train_fom(&resolve(&a.common)?, &a.solver, a.common.out.as_deref(), a.log.as_deref()).map_err(fail),
        Command::TrainRom(a) => commands::train_rom(&resolve(&a.common)?, &a.solver, a.common.out.as_deref(), a.log.as_deref()).map_err(fail),
        Command::Eval { pred, reference, out } => commands::eval(&pred, &reference, out.as_deref()).map_err(fail),
        Command::Serve { common, problem, listen } => {
            let cfg = resolve(&common)?;
            commands::serve(&cfg, matches!(problem, ProblemKind::Reduced), listen.as_deref()).map_err(fail)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {}", msg.trim_end());
            ExitCode::FAILURE
        }
    }
}
