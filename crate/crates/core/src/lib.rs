//! Coupled compressive sensing for asynchronous neighbor discovery.
//!
//! Each active device encodes its `B`-bit identity with an outer tree code
//! into `n` sub-blocks, maps every sub-block to a column of a zero-padded
//! partial-DFT codebook and transmits the columns back to back. The query
//! node recovers each slot by LASSO over the delay-shifted dictionary, keeps
//! the best `K` terms, and stitches slots into identities with parity and
//! fade-consistency pruning.
//!
//! Modules follow the pipeline: [`tree_code`], [`codebook`], [`channel`],
//! [`cs_decoder`], and the Monte Carlo harness in [`simulator`].

pub mod channel;
pub mod codebook;
pub mod cs_decoder;
pub mod error;
pub mod seed;
pub mod simulator;
pub mod tree_code;

pub use channel::{DeviceRealization, FadingModel, FadingModelI, FadingModelII, ReceivedFrame};
pub use codebook::{Codebook, ShiftedDictionary};
pub use cs_decoder::{LassoConfig, SlotDecode, SparseEstimate};
pub use error::{CcsError, Result};
pub use simulator::{ErrorStats, Experiment, ExperimentConfig, FadingSpec, TrialResult};
pub use tree_code::{
    Candidate, CodedBlock, FadeMetric, FadePruneConfig, ParityGenerators, RootPolicy, SlotCandidateList,
    TreeCodeParams, TreeDecoderConfig,
};

pub use num_complex::Complex64;
