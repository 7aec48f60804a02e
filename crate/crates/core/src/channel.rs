//! Active-set, fading and delay sampling, and received-frame synthesis.

use std::collections::HashSet;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::error::{CcsError, Result};
use crate::tree_code::CodedBlock;

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Bounded fading: `|h| ~ U[h̲, 2h̲]`, uniform phase. `SNR = P·h̲²/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModelI {
    pub h_lower: f64,
    pub snr_linear: f64,
}

impl FadingModelI {
    pub fn new(h_lower: f64, snr_linear: f64) -> Result<Self> {
        if !(h_lower > 0.0 && h_lower.is_finite()) {
            return Err(CcsError::config("channel.h_lower", "must be positive"));
        }
        check_snr(snr_linear)?;
        Ok(Self { h_lower, snr_linear })
    }

    pub fn power(&self) -> f64 {
        2.0 * self.snr_linear / (self.h_lower * self.h_lower)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let mag = self.h_lower * (1.0 + rng.random::<f64>());
        Complex64::from_polar(mag, 2.0 * PI * rng.random::<f64>())
    }
}

/// Pareto power gains: `|h|² = g ~ Pareto(η, α)`, uniform phase.
/// `SNR = P·η/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModelII {
    pub eta: f64,
    pub alpha: f64,
    pub snr_linear: f64,
}

impl FadingModelII {
    pub fn new(eta: f64, alpha: f64, snr_linear: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(CcsError::config("channel.eta", "must be positive"));
        }
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(CcsError::config(
                "channel.alpha",
                format!("shape must exceed 1 for a finite mean gain, got {alpha}"),
            ));
        }
        check_snr(snr_linear)?;
        Ok(Self {
            eta,
            alpha,
            snr_linear,
        })
    }

    pub fn power(&self) -> f64 {
        2.0 * self.snr_linear / self.eta
    }

    /// Inverse-CDF draw `g = η·u^(−1/α)` with `u ∈ (0, 1]`.
    pub fn sample_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = 1.0 - rng.random::<f64>();
        self.eta * u.powf(-1.0 / self.alpha)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let g = self.sample_gain(rng);
        Complex64::from_polar(g.sqrt(), 2.0 * PI * rng.random::<f64>())
    }
}

fn check_snr(snr_linear: f64) -> Result<()> {
    if !(snr_linear > 0.0 && snr_linear.is_finite()) {
        return Err(CcsError::config("sweep.snr_db", "SNR must be finite"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FadingModel {
    I(FadingModelI),
    II(FadingModelII),
}

impl FadingModel {
    /// Transmit power `P` that realizes the model's SNR.
    pub fn power(&self) -> f64 {
        match self {
            FadingModel::I(m) => m.power(),
            FadingModel::II(m) => m.power(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        match self {
            FadingModel::I(m) => m.sample(rng),
            FadingModel::II(m) => m.sample(rng),
        }
    }
}

pub fn sample_fading_i<R: Rng + ?Sized>(model: &FadingModelI, rng: &mut R) -> Complex64 {
    model.sample(rng)
}

pub fn sample_fading_ii<R: Rng + ?Sized>(model: &FadingModelII, rng: &mut R) -> Complex64 {
    model.sample(rng)
}

/// Draws `k` distinct uniform `b`-bit identities, in draw order.
pub fn sample_active_set<R: Rng + ?Sized>(k: usize, b: u32, rng: &mut R) -> Result<Vec<u64>> {
    if b == 0 || b > 64 {
        return Err(CcsError::InvalidInput(format!(
            "identity length {b} out of range"
        )));
    }
    if b < 64 && (k as u128) > (1u128 << b) {
        return Err(CcsError::InvalidInput(format!(
            "cannot draw {k} distinct identities from 2^{b}"
        )));
    }
    // Dense space: sample indices directly. Sparse space: rejection.
    if b <= 24 {
        let space = 1usize << b;
        return Ok(index::sample(rng, space, k)
            .into_iter()
            .map(|i| i as u64)
            .collect());
    }
    let mask = if b == 64 { u64::MAX } else { (1u64 << b) - 1 };
    let mut seen = HashSet::with_capacity(k);
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let id = rng.random::<u64>() & mask;
        if seen.insert(id) {
            out.push(id);
        }
    }
    Ok(out)
}

/// Uniform integer delay on `[0, T]`.
pub fn sample_delay<R: Rng + ?Sized>(max_delay: usize, rng: &mut R) -> usize {
    rng.random_range(0..=max_delay)
}

/// One active device in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceRealization {
    pub identity: u64,
    pub h: Complex64,
    pub tau: usize,
}

/// Received frame `y` of `n·Ñ` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub y: Vec<Complex64>,
    slot_len: usize,
}

impl ReceivedFrame {
    pub fn new(y: Vec<Complex64>, slot_len: usize) -> Self {
        assert!(slot_len > 0 && y.len() % slot_len == 0);
        Self { y, slot_len }
    }

    pub fn num_slots(&self) -> usize {
        self.y.len() / self.slot_len
    }

    pub fn slot_len(&self) -> usize {
        self.slot_len
    }

    /// Symbols `[i·Ñ, (i+1)·Ñ)`.
    pub fn slot(&self, i: usize) -> &[Complex64] {
        &self.y[i * self.slot_len..(i + 1) * self.slot_len]
    }
}

/// Device transmit frame: the zero-padded codeword of each sub-block, back to
/// back. `codebooks` holds one shared codebook or one per slot.
pub fn device_frame(block: &CodedBlock, codebooks: &[Codebook]) -> Result<Vec<Complex64>> {
    let n = block.0.len();
    check_codebook_count(codebooks, n)?;
    let mut x = Vec::with_capacity(n * codebooks[0].slot_len());
    for (i, &v) in block.0.iter().enumerate() {
        x.extend(codebook_for(codebooks, i).zero_pad(v as usize)?);
    }
    Ok(x)
}

fn check_codebook_count(codebooks: &[Codebook], n: usize) -> Result<()> {
    if codebooks.is_empty() || (codebooks.len() != 1 && codebooks.len() != n) {
        return Err(CcsError::InvalidInput(format!(
            "need 1 or {n} codebooks, got {}",
            codebooks.len()
        )));
    }
    Ok(())
}

#[inline]
fn codebook_for(codebooks: &[Codebook], slot: usize) -> &Codebook {
    if codebooks.len() == 1 {
        &codebooks[0]
    } else {
        &codebooks[slot]
    }
}

/// `y_t = Σ_k √P·h_k·x_{k,t−τ_k} + w_t`, `t ∈ [0, N)`, with unit-variance
/// circular complex Gaussian noise when `noise_on`.
pub fn synthesize_frame<R: Rng + ?Sized>(
    devices: &[DeviceRealization],
    coded_blocks: &[CodedBlock],
    codebooks: &[Codebook],
    n: usize,
    power: f64,
    noise_on: bool,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    if devices.len() != coded_blocks.len() {
        return Err(CcsError::InvalidInput(format!(
            "{} devices but {} coded blocks",
            devices.len(),
            coded_blocks.len()
        )));
    }
    check_codebook_count(codebooks, n)?;
    let slot_len = codebooks[0].slot_len();
    let max_delay = codebooks[0].max_delay();
    let frame_len = n * slot_len;
    let mut y = vec![Complex64::new(0.0, 0.0); frame_len];
    let amplitude = power.sqrt();

    for (dev, block) in devices.iter().zip(coded_blocks) {
        if dev.tau > max_delay {
            return Err(CcsError::InvalidInput(format!(
                "delay {} exceeds maximum {max_delay}",
                dev.tau
            )));
        }
        if block.0.len() != n {
            return Err(CcsError::InvalidInput(format!(
                "coded block has {} sub-blocks, expected {n}",
                block.0.len()
            )));
        }
        let gain = dev.h * amplitude;
        for (i, &v) in block.0.iter().enumerate() {
            let cb = codebook_for(codebooks, i);
            let start = i * slot_len + dev.tau;
            for (r, s) in cb.column(v as usize)?.into_iter().enumerate() {
                y[start + r] += gain * s;
            }
        }
    }

    if noise_on {
        for w in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *w += Complex64::new(re, im) * FRAC_1_SQRT_2;
        }
    }
    Ok(ReceivedFrame::new(y, slot_len))
}
