use thiserror::Error;

/// Errors produced anywhere in the encode/transmit/decode pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CcsError {
    /// A parameter set violates one of its invariants. `key` names the
    /// offending parameter (e.g. `tree.l[0]`).
    #[error("invalid configuration at `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// An argument is outside the domain accepted by an operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// NaN or infinity encountered in numeric input.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl CcsError {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CcsError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CcsError>;
