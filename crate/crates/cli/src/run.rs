use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ccs_core::simulator::with_threads;
use ccs_core::{ErrorStats, Experiment};
use serde::Serialize;
use thiserror::Error;

use crate::config::{load_config, ConfigError, Overrides, ResolvedConfig};

pub const CSV_HEADER: &str = "snr_db,trials,pe,pe_ci95,missed_rate,false_alarm_rate,mean_decode_ms";
pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Simulation(#[from] ccs_core::CcsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Simulation(ccs_core::CcsError::Config { .. }) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    /// Worker threads; 0 picks the number of CPUs.
    pub threads: usize,
    pub overrides: Overrides,
    /// Record wall-clock decode time in the CSV. When off the column is 0
    /// and reruns produce byte-identical files.
    pub timing: bool,
    pub quiet: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointCounters {
    pub snr_db: f64,
    pub trials: usize,
    pub nonconverged_slots: usize,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub timing: bool,
    pub config: ResolvedConfig,
    pub duration_secs: f64,
    pub points: Vec<PointCounters>,
}

/// One CSV row. `f64` values print with Rust's shortest round-trip form.
pub fn csv_row(s: &ErrorStats, timing: bool) -> String {
    let ms = if timing { s.mean_decode_ms } else { 0.0 };
    format!(
        "{},{},{},{},{},{},{}",
        s.snr_db, s.trials, s.pe, s.pe_ci95, s.missed_rate, s.false_alarm_rate, ms
    )
}

pub fn render_csv(stats: &[ErrorStats], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for s in stats {
        out.push_str(&csv_row(s, timing));
        out.push('\n');
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(contents).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn run(opts: &RunOptions) -> Result<Vec<ErrorStats>, RunError> {
    let mut resolved = load_config(&opts.config)?;
    resolved.apply(&opts.overrides)?;
    let cfg = resolved.to_experiment()?;
    let experiment = Experiment::new(cfg)?;
    fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;

    let threads = if opts.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        opts.threads
    };
    let started = Instant::now();
    let quiet = opts.quiet;
    let stats = with_threads(threads, || {
        experiment.run_with(|s| {
            if !quiet {
                eprintln!(
                    "snr {:>6} dB: pe {:.4} ±{:.4}  missed {:.4}  false-alarm {:.4}  ({} trials, {:.1} ms/trial)",
                    s.snr_db, s.pe, s.pe_ci95, s.missed_rate, s.false_alarm_rate, s.trials, s.mean_decode_ms
                );
            }
        })
    })?;

    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: resolved.sweep.seed,
        threads,
        timing: opts.timing,
        config: resolved,
        duration_secs: started.elapsed().as_secs_f64(),
        points: stats
            .iter()
            .map(|s| PointCounters {
                snr_db: s.snr_db,
                trials: s.trials,
                nonconverged_slots: s.nonconverged_slots,
            })
            .collect(),
    };
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(
        &opts.out.join(RESULTS_FILE),
        render_csv(&stats, opts.timing).as_bytes(),
    )?;
    write_atomic(&opts.out.join(MANIFEST_FILE), manifest_json.as_bytes())?;
    Ok(stats)
}
