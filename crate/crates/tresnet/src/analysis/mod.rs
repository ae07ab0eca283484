//! Statistical analysis: correlation, relevant-VM selection, seasonal
//! decomposition, and kernel density estimation.

mod correlation;
mod decompose;
mod kde;

pub use correlation::{pearson, top_k_relevant, CorrelationMatrix};
pub use decompose::{seasonal_decompose, Decomposition};
pub use kde::{gaussian_kde, linspace, silverman_bandwidth, Bandwidth};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("input lengths differ: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },

    #[error("need at least {needed} points, got {len}")]
    TooShort { len: usize, needed: usize },

    #[error("correlation is undefined for a constant series")]
    UndefinedCorrelation,

    #[error("vm index {index} out of range for {count} vms")]
    VmIndexOutOfRange { index: usize, count: usize },

    #[error("k={k} exceeds the {available} other vms in the deployment")]
    KTooLarge { k: usize, available: usize },

    #[error("range {start}..{end} does not fit a series of length {len}")]
    RangeOutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("period must be at least 1")]
    ZeroPeriod,

    #[error("series of length {len} is too short to decompose with period {period} (need {needed})")]
    InsufficientData {
        len: usize,
        period: usize,
        needed: usize,
    },

    #[error("bandwidth must be positive and finite, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("automatic bandwidth needs at least 2 distinct samples")]
    BandwidthUndefined,

    #[error("kde needs at least one sample")]
    EmptySamples,
}
