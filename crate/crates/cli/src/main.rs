//! `iqc`: robust invariance analysis from a JSON configuration.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 infeasible LMIs,
//! 3 numerical failure, 4 failed verification.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::SimulateArgs;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "iqc", version, about = "Robust stability and invariant-ellipsoid analysis with IQC multipliers")]
struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the ellipsoid LMIs for every basis length and write
    /// certificates.json and ellipse_nu<k>.csv.
    Analyze { config: PathBuf },
    /// Re-check certificates by frequency sampling and simulation and write
    /// verify_report.json.
    Verify { config: PathBuf, certificates: PathBuf },
    /// Simulate the loop under a worst-case unit-energy disturbance and write
    /// traj_<tag>.csv.
    Simulate {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long = "direction-angle", allow_hyphen_values = true, default_value_t = 0.0)]
        direction_angle: f64,
        #[arg(long)]
        horizon: Option<f64>,
        /// Use d = 0 instead of the worst-case input.
        #[arg(long)]
        zero_disturbance: bool,
    },
    /// Solve the non-symmetric Riccati equation for the multiplier and write
    /// factorization.json.
    Factorize {
        config: PathBuf,
        /// Certificates from `analyze`; otherwise `inline_p` from the config.
        #[arg(long)]
        certificates: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { config } => commands::analyze(&config, &cli.out),
        Command::Verify { config, certificates } => commands::verify(&config, &certificates, &cli.out),
        Command::Simulate { config, delta, direction_angle, horizon, zero_disturbance } => {
            let path = commands::simulate(&config, &SimulateArgs { delta, direction_angle, horizon, zero_disturbance }, &cli.out)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Factorize { config, certificates } => commands::factorize(&config, certificates.as_deref(), &cli.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("IQC_LOG", "error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iqc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
