use std::path::PathBuf;
use std::process::ExitCode;

use ccs_cli::{Overrides, RunOptions};
use clap::{Parser, Subcommand};

/// Coupled compressive sensing neighbor discovery simulator.
#[derive(Debug, Parser)]
#[command(name = "ccs-nd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an SNR sweep and write results.csv and manifest.json.
    Run {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all CPUs).
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the SNR grid, comma separated dB values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        snr: Option<Vec<f64>>,
        /// Override the number of trials per SNR point.
        #[arg(long)]
        trials: Option<usize>,
        /// Write 0 in the timing column so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Suppress per-point progress lines.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Validate a config and print it with all defaults resolved.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            seed,
            snr,
            trials,
            no_timing,
            quiet,
        } => {
            let opts = RunOptions {
                config,
                out,
                threads,
                overrides: Overrides {
                    seed,
                    snr_db: snr,
                    trials,
                },
                timing: !no_timing,
                quiet,
            };
            match ccs_cli::run(&opts) {
                Ok(_) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Command::Check { config } => match ccs_cli::load_config(&config) {
            Ok(resolved) => {
                print!("{}", toml::to_string(&resolved).expect("config serializes"));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}
