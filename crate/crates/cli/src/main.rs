//! `zeeman-eit`: simulate, fit and invert Zeeman-resolved EIT spectra.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;
mod selfcheck;

use clap::{Parser, Subcommand};

use commands::{InvertFlags, SweepFlags};
use config::RunFlags;
use error::{CliError, EXIT_CONFIG};
use selfcheck::SelfCheckFlags;

#[derive(Debug, Parser)]
#[command(
    name = "zeeman-eit",
    version,
    about = "Zeeman-resolved EIT magnetometry on the Rb D2 line"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Density-matrix probe scan; writes CSV + JSON sidecar
    Simulate(RunFlags),
    /// Closed-form toy spectrum and peak report
    Toy(RunFlags),
    /// Scan over a list of θ, φ, β_t or |B| values
    Sweep(SweepFlags),
    /// Field estimate from a spectrum CSV
    Invert(InvertFlags),
    /// Run the invariant suite
    Selfcheck(SelfCheckFlags),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("ZEEMAN_EIT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(vec![format!("ZEEMAN_EIT_THREADS = {v:?} must be a positive integer")]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(vec![format!("thread pool: {e}")]))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(f) => commands::cmd_simulate(f),
        Command::Toy(f) => commands::cmd_toy(f),
        Command::Sweep(f) => commands::cmd_sweep(f),
        Command::Invert(f) => commands::cmd_invert(f),
        Command::Selfcheck(f) => selfcheck::cmd_selfcheck(f),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
