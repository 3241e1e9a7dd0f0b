//! Batch driver: integrate a scenario file, certify the trajectory, export
//! CSV + JSON. Exit 0 when every check passes, 2 when any check fails,
//! 1 on parse/validation/integration errors.

use clap::{Parser, Subcommand};
use proxsweep::cli::{self, RunOptions};
use std::error::Error as _;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "proxsweep",
    about = "Integrate constrained flows by projection time-stepping and certify the results"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario: integrate, check, export.
    Run {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for trajectory.csv and report.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Comma-separated subset of checks to run instead of the file's list.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Suppress per-check output.
        #[arg(long)]
        quiet: bool,
        /// Override the file's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one variant per value of a swept parameter, plus a summary table.
    Sweep {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Parameter to vary: h, T, or x0[i].
        #[arg(long)]
        parameter: String,
        /// Comma-separated values for the parameter.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Directory that receives one subdirectory per variant.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Comma-separated subset of checks to run instead of the file's list.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
        /// Suppress per-check output.
        #[arg(long)]
        quiet: bool,
        /// Override the file's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn report_error(e: &cli::CliError) {
    eprintln!("error: {e}");
    let mut source = e.source();
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out_dir, checks, quiet, seed } => {
            let opts = RunOptions { out_dir, checks, seed, quiet };
            match cli::run(&scenario, &opts) {
                Ok(outcome) if outcome.report.overall_pass => ExitCode::from(0),
                Ok(_) => ExitCode::from(2),
                Err(e) => {
                    report_error(&e);
                    ExitCode::from(1)
                }
            }
        }
        Command::Sweep { scenario, parameter, values, out_dir, checks, quiet, seed } => {
            let opts = RunOptions { out_dir, checks, seed, quiet };
            match cli::sweep(&scenario, &parameter, &values, &opts) {
                Ok(outcome) if outcome.all_pass => ExitCode::from(0),
                Ok(_) => ExitCode::from(2),
                Err(e) => {
                    report_error(&e);
                    ExitCode::from(1)
                }
            }
        }
    }
}
