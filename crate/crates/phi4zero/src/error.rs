//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A hierarchy level must be an odd integer >= 3.
    #[error("level {0} is not an odd integer >= 3")]
    InvalidLevel(u32),

    /// Truncation dimensions must be odd and >= 5.
    #[error("n_max {0} is not an odd integer >= 5")]
    InvalidNMax(u32),

    /// A configuration field failed validation before the run started.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Exponentiating a log-space weight left the binary64 range.
    #[error("multinomial weight overflow for n = {n}")]
    WeightOverflow { n: u32 },

    /// A term sum left the binary64 range.
    #[error("non-finite value in {what} at level {n}")]
    NonFinite { what: &'static str, n: u32 },

    /// A division that the mapping treats as leaving the subset of
    /// sign-correct sequences (vanishing component or denominator).
    #[error("degenerate value at level {n}: {reason}")]
    Degenerate { n: u32, reason: &'static str },

    /// classify_trace needs at least 4 samples.
    #[error("trace too short to classify ({0} samples, need >= 4)")]
    InsufficientData(usize),

    /// oracle_compare only accepts converged solver output.
    #[error("solver result is not converged (status {0})")]
    NotConverged(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
