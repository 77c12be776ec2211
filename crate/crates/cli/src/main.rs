//! Command line front end: binds run-configuration files to the four tasks
//! and writes the tables, JSON, and plot-ready CSV they produce.
//!
//! Exit codes: 0 success, 1 output/io failure, 2 configuration error,
//! 3 numerical failure, 4 empty result where the task requires one.

mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epigame_core::config::TaskKind;

#[derive(Parser)]
#[command(
    name = "epigame",
    version,
    about = "Two-type epidemic social-distancing game solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the compartmental dynamics for one profile
    Simulate(RunArgs),
    /// Enumerate the Nash equilibria of the two-point game
    Nash(RunArgs),
    /// Scan for generalized Nash equilibria under a variance bound
    Gne(RunArgs),
    /// Rerun the matching task over a parameter range
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run-configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, `section.key=value` or `key=value`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory, overriding the configured one
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the scans (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Output(String),
    Config(String),
    Numeric(String),
    Empty(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Output(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Empty(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Output(m)
            | CliError::Config(m)
            | CliError::Numeric(m)
            | CliError::Empty(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Simulate(args) => (TaskKind::Simulate, args),
        Command::Nash(args) => (TaskKind::Nash, args),
        Command::Gne(args) => (TaskKind::Gne, args),
        Command::Sweep(args) => (TaskKind::Sweep, args),
    };
    match tasks::run(kind, args) {
        Ok(result) => {
            println!("{result}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
