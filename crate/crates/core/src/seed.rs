//! Seed derivation shared by every stochastic component.
//!
//! All randomness flows from a single master seed through [`derive`], so
//! each trial, stage or slot owns an independent stream whose contents do
//! not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 generator. Used where a bit-exact, easily reproduced stream is
/// part of the contract (parity generators).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }
}

/// Combines a parent seed with a path of labels into a child seed.
pub fn derive(parent: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(mix64(parent), |acc, &label| {
        mix64(acc ^ mix64(label.wrapping_add(GOLDEN_GAMMA)))
    })
}

/// ChaCha stream for a derived seed.
pub fn rng(parent: u64, labels: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parent, labels))
}

/// Domain-separation labels, so streams for different purposes never alias.
pub mod label {
    pub const CODEBOOK: u64 = 1;
    pub const PARITY: u64 = 2;
    pub const TRIAL: u64 = 3;
    pub const IDENTITIES: u64 = 4;
    pub const FADING: u64 = 5;
    pub const DELAYS: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const SLOT_ROWS: u64 = 8;
}
