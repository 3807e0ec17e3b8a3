use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mixpot_cli::{run, CommandKind, Invocation, RunConfig};

/// Numerical laboratory for mixed local and nonlocal p-Laplace equations with measure data.
#[derive(Debug, Parser)]
#[command(name = "mixpot", version)]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory for cached kernel weights.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Worker threads for independent scenes and scales.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Allow materializing dense kernel matrices beyond the default budget.
    #[arg(long, global = true)]
    dense_ok: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Riesz or Wolff potential profile of the scene measure.
    Potential,
    /// Dirichlet solve with the scene data.
    Solve,
    /// Solution obtained as a limit of approximations.
    Sola,
    /// Run experiments by name (`all` for every one); the configured list when none is given.
    Experiment { names: Vec<String> },
    /// Recompute every bracket term by the independent path and report the largest discrepancy.
    Audit { names: Vec<String> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, names) = match cli.command {
        Command::Potential => (CommandKind::Potential, Vec::new()),
        Command::Solve => (CommandKind::Solve, Vec::new()),
        Command::Sola => (CommandKind::Sola, Vec::new()),
        Command::Experiment { names } => (CommandKind::Experiment, names),
        Command::Audit { names } => (CommandKind::Audit, names),
    };
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let inv = Invocation {
        command: Some(command),
        names,
        out: cli.out,
        cache: cli.cache,
        threads: cli.threads,
        dense_ok: cli.dense_ok,
    };
    match cfg.and_then(|cfg| run(cfg, &inv)) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
