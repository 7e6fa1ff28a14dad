mod config;
mod error;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::RunConfig;
use error::CliError;
use output::RunOutput;
use run::Command;

/// Forward self-similar profiles of the damped viscoelastic Navier-Stokes
/// system. Config keys may be overridden with `SSVF_<SECTION>_<KEY>`.
#[derive(Debug, Parser)]
#[command(name = "selfsim", version)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `run.out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads (overrides `run.workers`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for randomized checks (overrides `run.seed`); at most 2^63 - 1
    /// so that it fits a TOML integer.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Caloric extension of the datum at t = 1.
    Caloric,
    /// Profile correction by sigma-continuation.
    SolveProfile,
    /// Mild-solution evolution from t0 to t1.
    Evolve,
    /// Diagnostics on a solved profile.
    Verify,
    /// Warm-started fixed points on a uniform sigma grid.
    SweepSigma,
}

fn settings(cli: &Cli) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_text("", std::env::vars())?,
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::BadRange {
                key: "--workers".into(),
                line: None,
                msg: "workers must be positive".into(),
            });
        }
        cfg.run.workers = Some(w);
    }
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    let dir = cli.out.clone().or_else(|| cfg.run.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    cfg.run.out = Some(dir.clone());
    Ok((cfg, dir))
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let cmd = match cli.command {
        Sub::Caloric => Command::Caloric,
        Sub::SolveProfile => Command::SolveProfile,
        Sub::Evolve => Command::Evolve,
        Sub::Verify => Command::Verify,
        Sub::SweepSigma => Command::SweepSigma,
    };
    let (cfg, dir) = settings(cli)?;
    let mut out = RunOutput::new(&dir)?;
    let start = Instant::now();
    let result = selfsim_core::exec::with_workers(cfg.run.workers, || run::run(cmd, &cfg, &mut out));
    let status = match &result {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error (exit {}): {e}", e.exit_code()),
    };
    let manifest = out.finish(cmd.name(), &status, &cfg, start.elapsed().as_secs_f64())?;
    log::info!("wrote {}", manifest.display());
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
