//! Outer tree code: splits a device identity into `n` sub-blocks, appends
//! random linear parity bits, and stitches per-slot recovery lists back into
//! full messages.
//!
//! Sub-block `i` is a `J`-bit word laid out as `m_i` message bits (high end)
//! followed by `l_i` parity bits (low end). Message bits are taken from the
//! `B`-bit identity most-significant first, so sub-block 0 carries the top
//! `m_0` bits.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CcsError, Result};
use crate::seed::{mix64, SplitMix64};

/// Largest supported identity length; identities are packed into a `u64`.
pub const MAX_MESSAGE_BITS: u32 = 64;
/// Largest supported sub-block width; the codebook has `2^J` columns.
pub const MAX_SUB_BLOCK_BITS: u32 = 24;

/// Shape of the outer code: `n` sub-blocks of `J` bits, `l[i]` parity bits in
/// sub-block `i`, `B` message bits overall.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeCodeParams {
    n: usize,
    sub_block_bits: u32,
    parity_bits: Vec<u32>,
    message_bits: u32,
}

impl TreeCodeParams {
    pub fn new(n: usize, sub_block_bits: u32, parity_bits: Vec<u32>, message_bits: u32) -> Result<Self> {
        if n == 0 {
            return Err(CcsError::config("tree.n", "need at least one sub-block"));
        }
        if sub_block_bits == 0 || sub_block_bits > MAX_SUB_BLOCK_BITS {
            return Err(CcsError::config(
                "tree.J",
                format!("sub-block width must be in 1..={MAX_SUB_BLOCK_BITS}, got {sub_block_bits}"),
            ));
        }
        if parity_bits.len() != n {
            return Err(CcsError::config(
                "tree.l",
                format!("expected {n} parity counts, got {}", parity_bits.len()),
            ));
        }
        if parity_bits[0] != 0 {
            return Err(CcsError::config(
                "tree.l[0]",
                "sub-block 0 carries no parity bits (l_0 = 0)",
            ));
        }
        for (i, &l) in parity_bits.iter().enumerate() {
            if l > sub_block_bits {
                return Err(CcsError::config(
                    format!("tree.l[{i}]"),
                    format!("{l} parity bits exceed the sub-block width {sub_block_bits}"),
                ));
            }
        }
        if message_bits == 0 || message_bits > MAX_MESSAGE_BITS {
            return Err(CcsError::config(
                "tree.B",
                format!("message length must be in 1..={MAX_MESSAGE_BITS}, got {message_bits}"),
            ));
        }
        let carried: u32 = parity_bits.iter().map(|&l| sub_block_bits - l).sum();
        if carried != message_bits {
            return Err(CcsError::config(
                "tree.B",
                format!("sub-blocks carry {carried} message bits (sum of J - l[i]) but B = {message_bits}"),
            ));
        }
        Ok(Self {
            n,
            sub_block_bits,
            parity_bits,
            message_bits,
        })
    }

    /// Number of sub-blocks `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Sub-block width `J`.
    pub fn sub_block_bits(&self) -> u32 {
        self.sub_block_bits
    }

    /// Parity profile `l`.
    pub fn parity_bits(&self) -> &[u32] {
        &self.parity_bits
    }

    /// Identity length `B`.
    pub fn message_bits(&self) -> u32 {
        self.message_bits
    }

    /// Coded length `M = n·J`.
    pub fn coded_bits(&self) -> u32 {
        self.n as u32 * self.sub_block_bits
    }

    /// `m_i`, message bits carried by sub-block `i`.
    pub fn message_bits_in(&self, i: usize) -> u32 {
        self.sub_block_bits - self.parity_bits[i]
    }

    /// Message bits carried by sub-blocks `0..i`.
    pub fn message_bits_before(&self, i: usize) -> u32 {
        (0..i).map(|t| self.message_bits_in(t)).sum()
    }

    fn message_chunk(&self, message: u64, i: usize) -> u64 {
        let m = self.message_bits_in(i);
        let shift = self.message_bits - self.message_bits_before(i) - m;
        (message >> shift) & low_mask(m)
    }
}

#[inline]
fn low_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[inline]
fn gf2_dot(a: u64, b: u64) -> u32 {
    (a & b).count_ones() & 1
}

/// Random parity-check matrices, one per stage.
///
/// Row `r` of stage `i` is a bit mask over the `Σ_{t<i} m_t` message bits
/// preceding the stage, packed as an integer whose most significant bit is
/// identity bit 0. Stage `i` rows are successive outputs of a SplitMix64
/// stream seeded with `mix64(seed) ^ i`, each truncated to the mask width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityGenerators {
    seed: u64,
    stages: Vec<Vec<u64>>,
    widths: Vec<u32>,
}

impl ParityGenerators {
    pub fn derive(params: &TreeCodeParams, seed: u64) -> Self {
        let mut stages = Vec::with_capacity(params.n);
        let mut widths = Vec::with_capacity(params.n);
        for i in 0..params.n {
            let width = params.message_bits_before(i);
            let mut stream = SplitMix64::new(mix64(seed) ^ i as u64);
            let rows = (0..params.parity_bits[i])
                .map(|_| stream.next_u64() & low_mask(width))
                .collect();
            stages.push(rows);
            widths.push(width);
        }
        Self { seed, stages, widths }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Rows of the stage-`i` matrix.
    pub fn stage(&self, i: usize) -> &[u64] {
        &self.stages[i]
    }

    /// `(rows, columns)` of the stage-`i` matrix.
    pub fn shape(&self, i: usize) -> (usize, usize) {
        (self.stages[i].len(), self.widths[i] as usize)
    }

    /// True when no stage carries parity bits.
    pub fn is_empty(&self) -> bool {
        self.stages.iter().all(Vec::is_empty)
    }

    /// Matrix entry `(row, col)`; column 0 is the earliest message bit.
    pub fn bit(&self, stage: usize, row: usize, col: usize) -> bool {
        let width = self.widths[stage] as usize;
        assert!(col < width, "column {col} out of range for width {width}");
        (self.stages[stage][row] >> (width - 1 - col)) & 1 == 1
    }

    /// Parity word for stage `i` given the preceding message bits.
    #[inline]
    fn parity(&self, i: usize, prior: u64) -> u64 {
        self.stages[i]
            .iter()
            .fold(0u64, |acc, &row| (acc << 1) | gf2_dot(row, prior) as u64)
    }
}

/// Convenience wrapper matching the encoder/decoder construction.
pub fn derive_parity_generators(params: &TreeCodeParams, seed: u64) -> ParityGenerators {
    ParityGenerators::derive(params, seed)
}

/// `n` coded sub-blocks, each a `J`-bit word.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodedBlock(pub Vec<u32>);

impl CodedBlock {
    pub fn sub_blocks(&self) -> &[u32] {
        &self.0
    }
}

pub fn tree_encode(message: u64, params: &TreeCodeParams, gens: &ParityGenerators) -> Result<CodedBlock> {
    if params.message_bits < 64 && message >> params.message_bits != 0 {
        return Err(CcsError::InvalidInput(format!(
            "message {message:#x} has more than {} bits",
            params.message_bits
        )));
    }
    let mut prior = 0u64;
    let mut out = Vec::with_capacity(params.n);
    for i in 0..params.n {
        let chunk = params.message_chunk(message, i);
        let l = params.parity_bits[i];
        let parity = gens.parity(i, prior);
        out.push(((chunk << l) | parity) as u32);
        prior = (prior << params.message_bits_in(i)) | chunk;
    }
    Ok(CodedBlock(out))
}

/// Reassembles the identity from a full list of sub-blocks, ignoring parity.
pub fn extract_message(sub_blocks: &[u32], params: &TreeCodeParams) -> u64 {
    sub_blocks.iter().enumerate().fold(0u64, |acc, (i, &v)| {
        let m = params.message_bits_in(i);
        let chunk = (v as u64) >> params.parity_bits[i];
        if m == 0 {
            acc
        } else {
            (acc << m) | chunk
        }
    })
}

/// Checks the stage-`stage` parity bits of `partial_path` against the
/// message bits of the sub-blocks before it. Vacuously true when `l_i = 0`.
pub fn check_parity(
    partial_path: &[u32],
    stage: usize,
    params: &TreeCodeParams,
    gens: &ParityGenerators,
) -> bool {
    debug_assert_eq!(partial_path.len(), stage + 1);
    let l = params.parity_bits[stage];
    if l == 0 {
        return true;
    }
    let prior = extract_message(&partial_path[..stage], params);
    let embedded = partial_path[stage] as u64 & low_mask(l);
    embedded == gens.parity(stage, prior)
}

/// One entry of a per-slot recovery list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Sub-block value (codebook column index).
    pub value: u32,
    /// Delay estimate in symbols.
    pub delay: usize,
    /// Estimated coefficient `√P·h`.
    pub coeff: Complex64,
}

/// Recovery output for one slot: at most `K` candidates.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlotCandidateList {
    pub slot: usize,
    pub entries: Vec<Candidate>,
}

impl SlotCandidateList {
    pub fn new(slot: usize, entries: Vec<Candidate>) -> Self {
        Self { slot, entries }
    }
}

/// How a candidate coefficient is compared with a path's fade estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadeMetric {
    /// `| |c| − mean|c| | / mean|c|`; phase ignored.
    #[default]
    Magnitude,
    /// `|c − mean c| / |mean c|`; a device's coefficient is the same complex
    /// number in every slot, so phase discriminates too.
    Complex,
}

/// Soft-information pruning rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadePruneConfig {
    pub enabled: bool,
    /// Allowed relative deviation of a candidate from the running fade
    /// estimate of the path.
    pub rel_tolerance: f64,
    /// Also require equal delays along a path.
    pub check_delay: bool,
    pub metric: FadeMetric,
    /// Stages per path allowed to fail the fade test. Such stages still have
    /// to pass parity and are left out of the running estimate. A slot where
    /// two devices share a sub-block reports their summed coefficient, which
    /// is what this budget absorbs.
    pub max_outliers: usize,
}

impl Default for FadePruneConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            rel_tolerance: 0.5,
            check_delay: false,
            metric: FadeMetric::Magnitude,
            max_outliers: 0,
        }
    }
}

/// What a root contributes when more than one full path survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootPolicy {
    /// A root yields a message only when exactly one path survives.
    #[default]
    UniqueOnly,
    /// A root yields every surviving path.
    AllSurvivors,
}

pub const DEFAULT_MAX_PATHS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeDecoderConfig {
    pub fade: FadePruneConfig,
    /// Frontier cap per root.
    pub max_paths: usize,
    pub root_policy: RootPolicy,
}

impl Default for TreeDecoderConfig {
    fn default() -> Self {
        Self {
            fade: FadePruneConfig::default(),
            max_paths: DEFAULT_MAX_PATHS,
            root_policy: RootPolicy::UniqueOnly,
        }
    }
}

impl TreeDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fade.enabled && !(self.fade.rel_tolerance > 0.0 && self.fade.rel_tolerance.is_finite()) {
            return Err(CcsError::config(
                "tree.fade_rel_tolerance",
                "must be positive when fade pruning is enabled",
            ));
        }
        if self.max_paths == 0 {
            return Err(CcsError::config("tree.max_paths", "must be positive"));
        }
        Ok(())
    }
}

/// A full path through the decoding tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivingPath {
    /// Index into each slot's candidate list.
    pub choice: Vec<usize>,
    pub sub_blocks: Vec<u32>,
    pub message: u64,
    pub mean_coeff: Complex64,
}

/// Tree decoder output: one recovered identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedMessage {
    pub message: u64,
    pub mean_coeff: Complex64,
}

#[derive(Debug, Clone)]
struct PartialPath {
    choice: Vec<usize>,
    prior: u64,
    delay: usize,
    /// Fade statistics over inlier stages.
    inliers: usize,
    mag_sum: f64,
    coeff_sum: Complex64,
    outliers: usize,
    deviation: f64,
}

impl PartialPath {
    fn relative_deviation(&self, coeff: Complex64, metric: FadeMetric) -> f64 {
        let n = self.inliers as f64;
        let (dist, reference) = match metric {
            FadeMetric::Magnitude => {
                let mean = self.mag_sum / n;
                ((coeff.norm() - mean).abs(), mean)
            }
            FadeMetric::Complex => {
                let mean = self.coeff_sum / n;
                ((coeff - mean).norm(), mean.norm())
            }
        };
        if reference > 0.0 {
            dist / reference
        } else if dist == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn extend(&self, idx: usize, cand: &Candidate, m: u32, l: u32) -> PartialPath {
        let mut choice = Vec::with_capacity(self.choice.len() + 1);
        choice.extend_from_slice(&self.choice);
        choice.push(idx);
        PartialPath {
            choice,
            prior: (self.prior << m) | ((cand.value as u64) >> l),
            ..self.clone()
        }
    }
}

/// Runs the pruned tree search from one root and returns every full path
/// that survives parity and fade checks.
pub fn surviving_paths_from_root(
    lists: &[SlotCandidateList],
    root: usize,
    params: &TreeCodeParams,
    gens: &ParityGenerators,
    cfg: &TreeDecoderConfig,
) -> Vec<SurvivingPath> {
    let root_cand = lists[0].entries[root];
    let fade = &cfg.fade;
    let mut frontier = vec![PartialPath {
        choice: vec![root],
        prior: (root_cand.value as u64) >> params.parity_bits[0],
        delay: root_cand.delay,
        inliers: 1,
        mag_sum: root_cand.coeff.norm(),
        coeff_sum: root_cand.coeff,
        outliers: 0,
        deviation: 0.0,
    }];

    for (stage, list) in lists.iter().enumerate().skip(1) {
        let l = params.parity_bits[stage];
        let m = params.message_bits_in(stage);
        let mut next = Vec::new();
        for path in &frontier {
            let parity = gens.parity(stage, path.prior);
            for (idx, cand) in list.entries.iter().enumerate() {
                if (cand.value as u64) & low_mask(l) != parity {
                    continue;
                }
                if fade.check_delay && cand.delay != path.delay {
                    continue;
                }
                let rel_dev = path.relative_deviation(cand.coeff, fade.metric);
                if !fade.enabled || rel_dev <= fade.rel_tolerance {
                    let mut p = path.extend(idx, cand, m, l);
                    p.inliers += 1;
                    p.mag_sum += cand.coeff.norm();
                    p.coeff_sum += cand.coeff;
                    p.deviation += rel_dev;
                    next.push(p);
                } else if path.outliers < fade.max_outliers {
                    // The candidate is the outlier.
                    let mut p = path.extend(idx, cand, m, l);
                    p.outliers += 1;
                    p.deviation += fade.rel_tolerance;
                    next.push(p);
                    // With a single inlier so far it is just as likely that
                    // the earlier stage was the outlier.
                    if path.inliers == 1 {
                        let mut q = path.extend(idx, cand, m, l);
                        q.outliers += 1;
                        q.mag_sum = cand.coeff.norm();
                        q.coeff_sum = cand.coeff;
                        q.deviation += fade.rel_tolerance;
                        next.push(q);
                    }
                }
            }
        }
        if next.len() > cfg.max_paths {
            // Stable: ties keep enumeration order.
            next.sort_by(|a, b| a.deviation.total_cmp(&b.deviation));
            next.truncate(cfg.max_paths);
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    let mut out: Vec<SurvivingPath> = Vec::with_capacity(frontier.len());
    for p in frontier {
        // Both outlier branches can reach the same full path.
        if out.iter().any(|q| q.choice == p.choice) {
            continue;
        }
        let sub_blocks: Vec<u32> = p
            .choice
            .iter()
            .enumerate()
            .map(|(slot, &idx)| lists[slot].entries[idx].value)
            .collect();
        out.push(SurvivingPath {
            message: p.prior,
            mean_coeff: p.coeff_sum / p.inliers as f64,
            choice: p.choice,
            sub_blocks,
        });
    }
    out
}

/// Stitches per-slot candidate lists into identities. The result is the
/// union over roots, keyed and ordered by message value; an empty result is
/// a legal outcome.
pub fn tree_decode(
    lists: &[SlotCandidateList],
    params: &TreeCodeParams,
    gens: &ParityGenerators,
    cfg: &TreeDecoderConfig,
) -> Result<Vec<DecodedMessage>> {
    if lists.len() != params.n {
        return Err(CcsError::InvalidInput(format!(
            "expected {} candidate lists, got {}",
            params.n,
            lists.len()
        )));
    }
    cfg.validate()?;
    let mut found: BTreeMap<u64, Complex64> = BTreeMap::new();
    for root in 0..lists[0].entries.len() {
        let paths = surviving_paths_from_root(lists, root, params, gens, cfg);
        let accepted: &[SurvivingPath] = match cfg.root_policy {
            RootPolicy::UniqueOnly if paths.len() == 1 => &paths,
            RootPolicy::UniqueOnly => &[],
            RootPolicy::AllSurvivors => &paths,
        };
        for p in accepted {
            found.entry(p.message).or_insert(p.mean_coeff);
        }
    }
    Ok(found
        .into_iter()
        .map(|(message, mean_coeff)| DecodedMessage { message, mean_coeff })
        .collect())
}
