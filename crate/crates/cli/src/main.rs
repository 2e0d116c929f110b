mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Failure;

/// Rescaled squared-exponential GP regression: rate sweeps, concentration
/// budgets and kernel certificates.
#[derive(Debug, Parser)]
#[command(name = "rgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Posterior contraction sweep over an n grid, with a log-log rate fit.
    Rates(Common),
    /// Noise- and design-process deviation budgets of the kernel estimator.
    Concentration(Common),
    /// Build the flat-top kernel and write its certificate.
    KernelCheck(Common),
    /// L2 bound sweep over random finite RKHS expansions.
    RkhsCheck(Common),
    /// One dataset plus its posterior summary.
    Simulate(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Exit with status 4 when the experiment's acceptance check fails.
    #[arg(long)]
    pub check: bool,
    /// Validate and print the resolved plan without computing.
    #[arg(long)]
    pub dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rates(c) => commands::run(commands::Kind::Rates, c),
        Command::Concentration(c) => commands::run(commands::Kind::Concentration, c),
        Command::KernelCheck(c) => commands::run(commands::Kind::KernelCheck, c),
        Command::RkhsCheck(c) => commands::run(commands::Kind::RkhsCheck, c),
        Command::Simulate(c) => commands::run(commands::Kind::Simulate, c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code())
        }
    }
}

impl Failure {
    fn code(&self) -> u8 {
        self.status as u8
    }
}
