//! End-to-end Monte Carlo harness: identities → tree code → codebook →
//! channel → per-slot LASSO → tree decoding, swept over SNR.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    db_to_linear, sample_active_set, sample_delay, synthesize_frame, DeviceRealization, FadingModel,
    FadingModelI, FadingModelII,
};
use crate::codebook::{Codebook, ShiftedDictionary};
use crate::cs_decoder::{decode_slot, LassoConfig};
use crate::error::{CcsError, Result};
use crate::seed::{self, label};
use crate::tree_code::{
    derive_parity_generators, tree_decode, tree_encode, CodedBlock, ParityGenerators, SlotCandidateList,
    TreeCodeParams, TreeDecoderConfig,
};

/// Fading model family without the SNR, which the sweep supplies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum FadingSpec {
    #[serde(rename = "I")]
    ModelI { h_lower: f64 },
    #[serde(rename = "II")]
    ModelII { eta: f64, alpha: f64 },
}

impl FadingSpec {
    pub fn at_snr(&self, snr_db: f64) -> Result<FadingModel> {
        let snr = db_to_linear(snr_db);
        Ok(match *self {
            FadingSpec::ModelI { h_lower } => FadingModel::I(FadingModelI::new(h_lower, snr)?),
            FadingSpec::ModelII { eta, alpha } => FadingModel::II(FadingModelII::new(eta, alpha, snr)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub tree: TreeCodeParams,
    /// Frame length `N`; each of the `n` slots has `Ñ = N/n` symbols.
    pub frame_len: usize,
    /// Maximum delay `T` in symbols.
    pub max_delay: usize,
    /// Active devices `K`, known to the decoder.
    pub active_devices: usize,
    pub fading: FadingSpec,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub lasso: LassoConfig,
    pub decoder: TreeDecoderConfig,
    /// Draw an independent DFT row subset for each slot.
    pub per_slot_codebooks: bool,
    /// Add receiver noise (disable for noiseless pipeline checks).
    pub noise: bool,
}

impl ExperimentConfig {
    pub fn slot_len(&self) -> usize {
        self.frame_len / self.tree.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tree.n();
        if self.frame_len == 0 || self.frame_len % n != 0 {
            return Err(CcsError::config(
                "codebook.frame_len",
                format!(
                    "frame length {} is not a positive multiple of n = {n}",
                    self.frame_len
                ),
            ));
        }
        let b = self.tree.message_bits();
        if b < 64 && (self.active_devices as u128) > (1u128 << b) {
            return Err(CcsError::config(
                "channel.active_devices",
                format!("{} devices exceed the 2^{b} identity space", self.active_devices),
            ));
        }
        if self.trials == 0 {
            return Err(CcsError::config("sweep.trials", "need at least one trial"));
        }
        if self.snr_db.is_empty() {
            return Err(CcsError::config("sweep.snr_db", "empty SNR grid"));
        }
        for (i, &snr) in self.snr_db.iter().enumerate() {
            if !snr.is_finite() {
                return Err(CcsError::config(format!("sweep.snr_db[{i}]"), "must be finite"));
            }
            self.fading.at_snr(snr)?;
        }
        self.lasso.validate()?;
        self.decoder.validate()?;
        // Dimension checks on the codebook.
        Codebook::from_rows(
            self.tree.sub_block_bits(),
            self.slot_len(),
            self.max_delay,
            (0..self.slot_len().saturating_sub(self.max_delay)).collect(),
        )
        .map(|_| ())
    }

    /// Seed of trial `trial` at SNR grid point `snr_index`.
    pub fn trial_seed(&self, snr_index: usize, trial: usize) -> u64 {
        seed::derive(self.seed, &[label::TRIAL, snr_index as u64, trial as u64])
    }
}

/// Outcome of one simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Sorted transmitted identities.
    pub transmitted: Vec<u64>,
    /// Sorted decoded identities.
    pub decoded: Vec<u64>,
    /// Number of true `(value, delay)` placements present in each slot list.
    pub slot_hits: Vec<usize>,
    /// LASSO convergence flag per slot.
    pub converged: Vec<bool>,
    /// Number of roots offered to the tree decoder.
    pub roots: usize,
    /// Wall-clock decode time (LASSO plus tree decoding), nanoseconds.
    #[serde(skip)]
    pub decode_nanos: u64,
}

impl TrialResult {
    pub fn missed(&self) -> usize {
        let decoded: BTreeSet<_> = self.decoded.iter().collect();
        self.transmitted.iter().filter(|id| !decoded.contains(id)).count()
    }

    pub fn false_alarms(&self) -> usize {
        let sent: BTreeSet<_> = self.transmitted.iter().collect();
        self.decoded.iter().filter(|id| !sent.contains(id)).count()
    }

    pub fn is_error(&self) -> bool {
        self.transmitted != self.decoded
    }

    /// Equality ignoring wall-clock timing.
    pub fn same_outcome(&self, other: &Self) -> bool {
        self.transmitted == other.transmitted
            && self.decoded == other.decoded
            && self.slot_hits == other.slot_hits
            && self.converged == other.converged
            && self.roots == other.roots
    }
}

/// Error statistics at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub snr_db: f64,
    pub trials: usize,
    /// Fraction of trials whose decoded set differs from the active set.
    pub pe: f64,
    /// Wilson 95% half-width for `pe`.
    pub pe_ci95: f64,
    /// Mean of `|K \ K̂| / K`.
    pub missed_rate: f64,
    /// Normal-approximation 95% half-width for `missed_rate`.
    pub missed_ci95: f64,
    /// Fraction of trials with at least one missed device.
    pub any_miss_rate: f64,
    /// Mean of `min(|K̂ \ K| / K, 1)`.
    pub false_alarm_rate: f64,
    pub false_alarm_ci95: f64,
    pub mean_decode_ms: f64,
    /// Slot solves that hit the iteration cap.
    pub nonconverged_slots: usize,
}

const Z95: f64 = 1.959963984540054;

impl ErrorStats {
    /// Wilson score interval for `pe`.
    pub fn pe_interval(&self) -> (f64, f64) {
        let (center, half) = wilson(self.pe, self.trials);
        ((center - half).max(0.0), (center + half).min(1.0))
    }

    pub fn missed_interval(&self) -> (f64, f64) {
        (
            (self.missed_rate - self.missed_ci95).max(0.0),
            (self.missed_rate + self.missed_ci95).min(1.0),
        )
    }
}

/// Wilson score interval `(center, half_width)` at 95%.
pub fn wilson(p: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (center, half)
}

fn mean_and_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

pub fn compute_stats(snr_db: f64, results: &[TrialResult]) -> Result<ErrorStats> {
    if results.is_empty() {
        return Err(CcsError::InvalidInput("no trial results to aggregate".into()));
    }
    let trials = results.len();
    let errors = results.iter().filter(|r| r.is_error()).count();
    let pe = errors as f64 / trials as f64;
    let frac = |count: usize, k: usize| {
        if k == 0 {
            0.0
        } else {
            (count as f64 / k as f64).min(1.0)
        }
    };
    let missed: Vec<f64> = results
        .iter()
        .map(|r| frac(r.missed(), r.transmitted.len()))
        .collect();
    let false_alarm: Vec<f64> = results
        .iter()
        .map(|r| frac(r.false_alarms(), r.transmitted.len()))
        .collect();
    let (missed_rate, missed_ci95) = mean_and_half_width(&missed);
    let (false_alarm_rate, false_alarm_ci95) = mean_and_half_width(&false_alarm);
    let any_miss = results.iter().filter(|r| r.missed() > 0).count();
    Ok(ErrorStats {
        snr_db,
        trials,
        pe,
        pe_ci95: wilson(pe, trials).1,
        missed_rate,
        missed_ci95,
        any_miss_rate: any_miss as f64 / trials as f64,
        false_alarm_rate,
        false_alarm_ci95,
        mean_decode_ms: results.iter().map(|r| r.decode_nanos as f64).sum::<f64>() / trials as f64 / 1e6,
        nonconverged_slots: results
            .iter()
            .map(|r| r.converged.iter().filter(|&&c| !c).count())
            .sum(),
    })
}

/// Everything shared by the trials of one experiment: codebooks,
/// dictionaries and parity generators.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    codebooks: Vec<Codebook>,
    dictionaries: Vec<ShiftedDictionary>,
    gens: ParityGenerators,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let j = cfg.tree.sub_block_bits();
        let slot_len = cfg.slot_len();
        let codebook_seed = seed::derive(cfg.seed, &[label::CODEBOOK]);
        let codebooks = if cfg.per_slot_codebooks {
            (0..cfg.tree.n())
                .map(|i| {
                    Codebook::build(
                        j,
                        slot_len,
                        cfg.max_delay,
                        seed::derive(codebook_seed, &[label::SLOT_ROWS, i as u64]),
                    )
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![Codebook::build(j, slot_len, cfg.max_delay, codebook_seed)?]
        };
        let dictionaries = codebooks.iter().cloned().map(ShiftedDictionary::new).collect();
        let gens = derive_parity_generators(&cfg.tree, seed::derive(cfg.seed, &[label::PARITY]));
        Ok(Self {
            cfg,
            codebooks,
            dictionaries,
            gens,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn generators(&self) -> &ParityGenerators {
        &self.gens
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }

    fn dictionary(&self, slot: usize) -> &ShiftedDictionary {
        if self.dictionaries.len() == 1 {
            &self.dictionaries[0]
        } else {
            &self.dictionaries[slot]
        }
    }

    /// Samples the devices of one trial.
    pub fn sample_devices(&self, trial_seed: u64, fading: &FadingModel) -> Result<Vec<DeviceRealization>> {
        let k = self.cfg.active_devices;
        let ids = sample_active_set(
            k,
            self.cfg.tree.message_bits(),
            &mut seed::rng(trial_seed, &[label::IDENTITIES]),
        )?;
        let mut fade_rng = seed::rng(trial_seed, &[label::FADING]);
        let mut delay_rng = seed::rng(trial_seed, &[label::DELAYS]);
        Ok(ids
            .into_iter()
            .map(|identity| DeviceRealization {
                identity,
                h: fading.sample(&mut fade_rng),
                tau: sample_delay(self.cfg.max_delay, &mut delay_rng),
            })
            .collect())
    }

    /// Per-slot recovery followed by tree decoding of a synthesized frame.
    pub fn run_trial(&self, snr_db: f64, trial_seed: u64) -> Result<TrialResult> {
        let fading = self.cfg.fading.at_snr(snr_db)?;
        let devices = self.sample_devices(trial_seed, &fading)?;
        let blocks = devices
            .iter()
            .map(|d| tree_encode(d.identity, &self.cfg.tree, &self.gens))
            .collect::<Result<Vec<CodedBlock>>>()?;
        let frame = synthesize_frame(
            &devices,
            &blocks,
            &self.codebooks,
            self.cfg.tree.n(),
            fading.power(),
            self.cfg.noise,
            &mut seed::rng(trial_seed, &[label::NOISE]),
        )?;

        let start = Instant::now();
        let n = self.cfg.tree.n();
        let noise_std = 1.0;
        let mut lists = Vec::with_capacity(n);
        let mut converged = Vec::with_capacity(n);
        let mut slot_hits = Vec::with_capacity(n);
        for slot in 0..n {
            let out = decode_slot(
                slot,
                frame.slot(slot),
                self.dictionary(slot),
                self.cfg.active_devices,
                noise_std,
                &self.cfg.lasso,
            )?;
            let truth: BTreeSet<(u32, usize)> = devices
                .iter()
                .zip(&blocks)
                .map(|(d, b)| (b.0[slot], d.tau))
                .collect();
            slot_hits.push(
                out.candidates
                    .entries
                    .iter()
                    .filter(|c| truth.contains(&(c.value, c.delay)))
                    .count(),
            );
            converged.push(out.converged);
            lists.push(out.candidates);
        }
        let roots = lists[0].entries.len();
        let decoded = decode_lists(&lists, &self.cfg.tree, &self.gens, &self.cfg.decoder)?;
        let decode_nanos = start.elapsed().as_nanos() as u64;

        let mut transmitted: Vec<u64> = devices.iter().map(|d| d.identity).collect();
        transmitted.sort_unstable();
        Ok(TrialResult {
            transmitted,
            decoded,
            slot_hits,
            converged,
            roots,
            decode_nanos,
        })
    }

    /// All trials at grid point `snr_index`, in trial order.
    pub fn run_point(&self, snr_index: usize) -> Result<Vec<TrialResult>> {
        let snr = self.cfg.snr_db[snr_index];
        (0..self.cfg.trials)
            .into_par_iter()
            .map(|t| self.run_trial(snr, self.cfg.trial_seed(snr_index, t)))
            .collect()
    }

    /// Runs the sweep on the current rayon pool, reporting each finished
    /// point to `on_point`.
    pub fn run_with<F: FnMut(&ErrorStats)>(&self, mut on_point: F) -> Result<Vec<ErrorStats>> {
        let mut out = Vec::with_capacity(self.cfg.snr_db.len());
        for i in 0..self.cfg.snr_db.len() {
            let results = self.run_point(i)?;
            let stats = compute_stats(self.cfg.snr_db[i], &results)?;
            on_point(&stats);
            out.push(stats);
        }
        Ok(out)
    }
}

fn decode_lists(
    lists: &[SlotCandidateList],
    params: &TreeCodeParams,
    gens: &ParityGenerators,
    cfg: &TreeDecoderConfig,
) -> Result<Vec<u64>> {
    Ok(tree_decode(lists, params, gens, cfg)?
        .into_iter()
        .map(|d| d.message)
        .collect())
}

/// One trial of `cfg` at `snr_db`.
pub fn run_trial(cfg: &ExperimentConfig, snr_db: f64, trial_seed: u64) -> Result<TrialResult> {
    Experiment::new(cfg.clone())?.run_trial(snr_db, trial_seed)
}

/// Runs the whole sweep on `threads` workers (0 = rayon default).
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<ErrorStats>> {
    let exp = Experiment::new(cfg.clone())?;
    with_threads(threads, || exp.run_with(|_| {}))
}

/// Runs `f` inside a dedicated rayon pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("failed to build worker pool");
    pool.install(f)
}
