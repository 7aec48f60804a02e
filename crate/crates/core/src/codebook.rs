//! Partial-DFT codebook and its delay-shifted dictionary.
//!
//! The codebook `S` keeps `Ñ − T` rows of the `2^J`-point DFT matrix. A
//! sub-block value `j` is sent as column `j` padded with `T` trailing zeros;
//! a delay of `τ` symbols slides it down inside the `Ñ`-symbol slot. The
//! shifted dictionary collects every `(j, τ)` placement as one column, so a
//! slot observation is `y = S̃·h̃ + w`.
//!
//! Products with `S̃` and `S̃ᴴ` are evaluated with one length-`2^J` FFT per
//! delay instead of materializing the `Ñ × 2^J(T+1)` matrix.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::index;
use rustfft::{Fft, FftPlanner};

use crate::error::{CcsError, Result};
use crate::tree_code::MAX_SUB_BLOCK_BITS;

/// Direct summation is used in `apply` when `nnz·rows` is at most this
/// many times `2^J` per delay that an FFT would cover.
const DIRECT_FACTOR: usize = 4;

/// `(Ñ − T) × 2^J` partial DFT matrix scaled so every zero-padded column has
/// squared norm `Ñ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    sub_block_bits: u32,
    slot_len: usize,
    max_delay: usize,
    rows: Vec<usize>,
    scale: f64,
}

impl Codebook {
    /// Draws `Ñ − T` distinct DFT rows uniformly at random.
    pub fn build(sub_block_bits: u32, slot_len: usize, max_delay: usize, seed: u64) -> Result<Self> {
        let (size, active) = Self::check_dims(sub_block_bits, slot_len, max_delay)?;
        let mut rng = crate::seed::rng(seed, &[crate::seed::label::CODEBOOK]);
        let mut rows = index::sample(&mut rng, size, active).into_vec();
        rows.sort_unstable();
        Self::from_rows(sub_block_bits, slot_len, max_delay, rows)
    }

    /// Codebook over an explicit row subset.
    pub fn from_rows(
        sub_block_bits: u32,
        slot_len: usize,
        max_delay: usize,
        rows: Vec<usize>,
    ) -> Result<Self> {
        let (size, active) = Self::check_dims(sub_block_bits, slot_len, max_delay)?;
        if rows.len() != active {
            return Err(CcsError::InvalidInput(format!(
                "need {active} rows for slot length {slot_len} and delay {max_delay}, got {}",
                rows.len()
            )));
        }
        let mut seen = vec![false; size];
        for &r in &rows {
            if r >= size || std::mem::replace(&mut seen[r], true) {
                return Err(CcsError::InvalidInput(format!(
                    "row {r} out of range or repeated"
                )));
            }
        }
        Ok(Self {
            sub_block_bits,
            slot_len,
            max_delay,
            rows,
            scale: (slot_len as f64 / active as f64).sqrt(),
        })
    }

    fn check_dims(sub_block_bits: u32, slot_len: usize, max_delay: usize) -> Result<(usize, usize)> {
        if sub_block_bits == 0 || sub_block_bits > MAX_SUB_BLOCK_BITS {
            return Err(CcsError::config("tree.J", "sub-block width out of range"));
        }
        if slot_len <= max_delay {
            return Err(CcsError::config(
                "codebook.max_delay",
                format!("slot length {slot_len} must exceed the maximum delay {max_delay}"),
            ));
        }
        let size = 1usize << sub_block_bits;
        let active = slot_len - max_delay;
        if active > size {
            return Err(CcsError::config(
                "codebook.frame_len",
                format!("{active} codeword symbols exceed the {size} available DFT rows"),
            ));
        }
        Ok((size, active))
    }

    pub fn sub_block_bits(&self) -> u32 {
        self.sub_block_bits
    }

    /// Number of columns, `2^J`.
    pub fn num_columns(&self) -> usize {
        1 << self.sub_block_bits
    }

    /// Slot length `Ñ`.
    pub fn slot_len(&self) -> usize {
        self.slot_len
    }

    /// Maximum delay `T`.
    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// Unpadded codeword length `Ñ − T`.
    pub fn codeword_len(&self) -> usize {
        self.rows.len()
    }

    /// Selected DFT row indices, ascending.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `S[r, c] = scale · exp(−2πi · rows[r] · c / 2^J)`.
    #[inline]
    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        let size = self.num_columns();
        let k = (self.rows[r] * c) % size;
        Complex64::from_polar(self.scale, -2.0 * PI * k as f64 / size as f64)
    }

    /// Column `s_c` of length `Ñ − T`.
    pub fn column(&self, c: usize) -> Result<Vec<Complex64>> {
        self.check_column(c)?;
        Ok((0..self.rows.len()).map(|r| self.entry(r, c)).collect())
    }

    /// Column `c` of `S_ZP`: `s_c` followed by `T` zeros.
    pub fn zero_pad(&self, c: usize) -> Result<Vec<Complex64>> {
        let mut col = self.column(c)?;
        col.resize(self.slot_len, Complex64::new(0.0, 0.0));
        Ok(col)
    }

    fn check_column(&self, c: usize) -> Result<()> {
        if c >= self.num_columns() {
            return Err(CcsError::InvalidInput(format!(
                "column {c} out of range for {} columns",
                self.num_columns()
            )));
        }
        Ok(())
    }
}

pub fn build_codebook(sub_block_bits: u32, slot_len: usize, max_delay: usize, seed: u64) -> Result<Codebook> {
    Codebook::build(sub_block_bits, slot_len, max_delay, seed)
}

/// The `Ñ × 2^J(T+1)` dictionary of all delayed codewords. Column `(j, τ)`
/// sits at flat index `j·(T+1) + τ`.
#[derive(Clone)]
pub struct ShiftedDictionary {
    codebook: Codebook,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `scale·e^{-2πik/2^J}`, used when `x` is sparse enough that direct
    /// summation beats one FFT per delay.
    twiddles: Vec<Complex64>,
}

impl fmt::Debug for ShiftedDictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShiftedDictionary")
            .field("codebook", &self.codebook)
            .finish_non_exhaustive()
    }
}

/// Scratch space for dictionary products. One per thread.
#[derive(Debug, Clone)]
pub struct DictWorkspace {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    support: Vec<usize>,
}

impl ShiftedDictionary {
    pub fn new(codebook: Codebook) -> Self {
        let mut planner = FftPlanner::new();
        let size = codebook.num_columns();
        let twiddles = (0..size)
            .map(|k| Complex64::from_polar(codebook.scale, -2.0 * PI * k as f64 / size as f64))
            .collect();
        Self {
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            twiddles,
            codebook,
        }
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    /// Number of rows, `Ñ`.
    pub fn num_rows(&self) -> usize {
        self.codebook.slot_len
    }

    /// Number of columns, `2^J(T+1)`.
    pub fn width(&self) -> usize {
        self.codebook.num_columns() * (self.codebook.max_delay + 1)
    }

    #[inline]
    pub fn flat_index(&self, column: usize, delay: usize) -> usize {
        debug_assert!(delay <= self.codebook.max_delay);
        column * (self.codebook.max_delay + 1) + delay
    }

    /// Inverse of [`flat_index`](Self::flat_index): `(column, delay)`.
    #[inline]
    pub fn split_index(&self, flat: usize) -> (usize, usize) {
        let shifts = self.codebook.max_delay + 1;
        (flat / shifts, flat % shifts)
    }

    /// Column `(j, τ)`: `τ` zeros, `s_j`, then `T − τ` zeros.
    pub fn column(&self, column: usize, delay: usize) -> Result<Vec<Complex64>> {
        if delay > self.codebook.max_delay {
            return Err(CcsError::InvalidInput(format!(
                "delay {delay} exceeds maximum {}",
                self.codebook.max_delay
            )));
        }
        let s = self.codebook.column(column)?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.num_rows()];
        out[delay..delay + s.len()].copy_from_slice(&s);
        Ok(out)
    }

    /// Dense column-major copy; for inspection and tests at small sizes.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        (0..self.width())
            .map(|flat| {
                let (j, tau) = self.split_index(flat);
                self.column(j, tau).expect("index in range")
            })
            .collect()
    }

    pub fn workspace(&self) -> DictWorkspace {
        let size = self.codebook.num_columns();
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        DictWorkspace {
            buf: vec![Complex64::new(0.0, 0.0); size],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            support: Vec::new(),
        }
    }

    /// `out = S̃·x`.
    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64], ws: &mut DictWorkspace) {
        assert_eq!(x.len(), self.width());
        assert_eq!(out.len(), self.num_rows());
        let zero = Complex64::new(0.0, 0.0);
        out.fill(zero);
        let shifts = self.codebook.max_delay + 1;
        let scale = self.codebook.scale;
        let size = self.codebook.num_columns();
        let rows = &self.codebook.rows;
        // The codebook size is a power of two.
        let mask = size - 1;

        ws.support.clear();
        ws.support.extend((0..x.len()).filter(|&i| x[i] != zero));
        if ws.support.len() * rows.len() <= DIRECT_FACTOR * size * shifts.min(ws.support.len()) {
            for &i in &ws.support {
                let (c, tau) = (i / shifts, i % shifts);
                let v = x[i];
                let dst = &mut out[tau..tau + rows.len()];
                for (o, &row) in dst.iter_mut().zip(rows) {
                    *o += v * self.twiddles[(row * c) & mask];
                }
            }
            return;
        }

        for tau in 0..shifts {
            let mut any = false;
            for (c, slot) in ws.buf.iter_mut().enumerate() {
                let v = x[c * shifts + tau];
                any |= v != zero;
                *slot = v;
            }
            if !any {
                continue;
            }
            self.forward.process_with_scratch(&mut ws.buf, &mut ws.scratch);
            for (r, &row) in self.codebook.rows.iter().enumerate() {
                out[tau + r] += ws.buf[row] * scale;
            }
        }
    }

    /// `out = S̃ᴴ·v`.
    pub fn adjoint(&self, v: &[Complex64], out: &mut [Complex64], ws: &mut DictWorkspace) {
        assert_eq!(v.len(), self.num_rows());
        assert_eq!(out.len(), self.width());
        let zero = Complex64::new(0.0, 0.0);
        let shifts = self.codebook.max_delay + 1;
        let scale = self.codebook.scale;
        for tau in 0..shifts {
            ws.buf.fill(zero);
            for (r, &row) in self.codebook.rows.iter().enumerate() {
                ws.buf[row] = v[tau + r];
            }
            self.inverse.process_with_scratch(&mut ws.buf, &mut ws.scratch);
            for (c, &val) in ws.buf.iter().enumerate() {
                out[c * shifts + tau] = val * scale;
            }
        }
    }

    /// Exact `‖S̃‖²`. DFT rows are mutually orthogonal, so `S̃S̃ᴴ` is diagonal
    /// with entry `scale²·2^J` times the number of shifts covering each row.
    pub fn lipschitz(&self) -> f64 {
        let active = self.codebook.codeword_len();
        let coverage = active.min(self.codebook.max_delay + 1);
        self.codebook.scale.powi(2) * self.codebook.num_columns() as f64 * coverage as f64
    }

    /// Power-iteration estimate of `‖S̃‖²` from a deterministic start.
    pub fn power_iteration(&self, iterations: usize) -> f64 {
        let mut ws = self.workspace();
        let mut x: Vec<Complex64> = (0..self.width())
            .map(|i| {
                let z = crate::seed::mix64(i as u64);
                Complex64::new((z >> 11) as f64 / (1u64 << 53) as f64 - 0.5, 0.0)
            })
            .collect();
        let mut y = vec![Complex64::new(0.0, 0.0); self.num_rows()];
        let mut estimate = 0.0;
        for _ in 0..iterations {
            let norm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            self.apply(&x, &mut y, &mut ws);
            self.adjoint(&y, &mut x, &mut ws);
            estimate = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        }
        estimate
    }

    /// Coefficient vector `h̃` for a set of `(column, delay, coefficient)`
    /// placements; coinciding placements add.
    pub fn sparse_coefficients(&self, placements: &[(usize, usize, Complex64)]) -> Result<Vec<Complex64>> {
        let mut h = vec![Complex64::new(0.0, 0.0); self.width()];
        for &(j, tau, coeff) in placements {
            self.codebook.check_column(j)?;
            if tau > self.codebook.max_delay {
                return Err(CcsError::InvalidInput(format!("delay {tau} exceeds maximum")));
            }
            h[self.flat_index(j, tau)] += coeff;
        }
        Ok(h)
    }
}

pub fn build_shifted_dictionary(codebook: &Codebook) -> ShiftedDictionary {
    ShiftedDictionary::new(codebook.clone())
}
