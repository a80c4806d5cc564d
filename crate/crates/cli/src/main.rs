#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, Sink};
use config::{RunConfig, Suite};

/// Continuous-state branching cascades: mechanisms, Laplace exponents, simulation and checks.
#[derive(Parser)]
#[command(name = "cbranch", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every simulation in the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; tables go to stdout and summaries to stderr when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set simulate.n_paths=1000`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate ψ⁰, φ and ψ⁰ − φ on a λ-grid and classify them.
    Mechanism,
    /// Joint Laplace exponents of (X_t, Y⁰_u).
    Laplace,
    /// Simulate the multitype cascade and write the ensemble.
    Simulate,
    /// Run verification suites; exit 1 if any check fails.
    Verify {
        /// Run only these suites (repeatable).
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text, &cli.sets)?;
    if let Some(seed) = cli.seed {
        cfg.simulate.seed = seed;
        cfg.verify.mc.seed = seed;
    }
    if cli.out.is_some() {
        cfg.out.clone_from(&cli.out);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let cfg = load(cli)?;
    let sink = Sink::new(cfg.out.clone())?;
    match &cli.command {
        Command::Mechanism => commands::mechanism(&cfg, &sink),
        Command::Laplace => commands::laplace(&cfg, &sink),
        Command::Simulate => commands::simulate(&cfg, &sink),
        Command::Verify { suites } => {
            let only = suites.iter().map(|s| Suite::parse(s)).collect::<Result<Vec<_>, _>>()?;
            commands::verify(&cfg, &only, &sink)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("io error: {msg}");
            ExitCode::from(2)
        }
    }
}
