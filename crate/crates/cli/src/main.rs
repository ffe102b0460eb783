use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod calibrate;
mod config;
mod decay;
mod frontier;
mod gaussian;
mod grid;
mod matrices;
mod output;

pub use output::UsageError;

/// Adaptive single-shot readout: error-rate/time tradeoffs, frontier sweeps
/// and rate calibration.
#[derive(Debug, Parser)]
#[command(name = "seqread", version, about)]
struct Cli {
    /// Worker threads for Monte Carlo runs. Results do not depend on it.
    #[arg(long, global = true, env = "SEQREAD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic and simulated tradeoff for a Gaussian readout signal.
    Gaussian(gaussian::Args),
    /// Fixed-time versus adaptive readout of a decaying state.
    Decay(decay::Args),
    /// Error-rate frontiers of the charge-state readout from a JSON run config.
    Frontier(frontier::Args),
    /// Extract rates from count trajectories.
    Calibrate(calibrate::Args),
    /// Write or inspect cached update matrices.
    Matrices(matrices::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError::new("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Gaussian(a) => gaussian::run(a),
        Command::Decay(a) => decay::run(a),
        Command::Frontier(a) => frontier::run(a),
        Command::Calibrate(a) => calibrate::run(a),
        Command::Matrices(a) => matrices::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
