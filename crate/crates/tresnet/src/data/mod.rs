//! Trace ingestion, validation, scaling, and splitting.

mod scaler;
mod split;
mod trace;
mod types;

pub use scaler::{downsample_max, fit_scaler, ScalerParams, DEFAULT_LOG_EPSILON};
pub use split::{Split, SplitSpec};
pub use trace::{filter_long_running, parse_trace, serialize_trace, TraceSchema};
pub use types::{Channel, CpuReading, Deployment, RawDeployment, RawTrace, RawVmSeries, VmSeries};

use thiserror::Error;

/// Errors raised by trace ingestion and the data transforms.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("line {line}: timestamp {timestamp} is not aligned to the {interval_seconds}s grid anchored at {anchor}")]
    Misaligned {
        line: u64,
        timestamp: i64,
        interval_seconds: i64,
        anchor: i64,
    },

    #[error("line {line}: duplicate reading for vm {vm_id} at timestamp {timestamp}")]
    DuplicateReading {
        line: u64,
        vm_id: String,
        timestamp: i64,
    },

    #[error("line {line}: timestamp {timestamp} for vm {vm_id} is out of order")]
    OutOfOrder {
        line: u64,
        vm_id: String,
        timestamp: i64,
    },

    #[error("line {line}: cpu readings must satisfy min <= avg <= max, got {min}/{avg}/{max}")]
    ChannelOrder {
        line: u64,
        min: f64,
        avg: f64,
        max: f64,
    },

    #[error("vm {vm_id}: reading {index} violates 0 <= min <= avg <= max <= 1 ({min}/{avg}/{max})")]
    InvalidReading {
        vm_id: String,
        index: usize,
        min: f64,
        avg: f64,
        max: f64,
    },

    #[error("interval must be positive, got {0}")]
    InvalidInterval(i64),

    #[error("deployment {deployment_id} has no vms")]
    EmptyDeployment { deployment_id: String },

    #[error("deployment {deployment_id}: duplicate vm id {vm_id}")]
    DuplicateVm {
        deployment_id: String,
        vm_id: String,
    },

    #[error("deployment {deployment_id}: vm {vm_id} does not share the deployment timeline")]
    TimelineMismatch {
        deployment_id: String,
        vm_id: String,
    },

    #[error("required span {required_span_seconds}s is not a positive multiple of the {interval_seconds}s interval")]
    InvalidSpan {
        required_span_seconds: i64,
        interval_seconds: i64,
    },

    #[error("log epsilon must be positive and finite, got {0}")]
    InvalidLogEpsilon(f64),

    #[error("cannot fit a scaler on an empty series")]
    EmptySeries,

    #[error("scaler input must be finite and non-negative, got {value} at index {index}")]
    InvalidScalerInput { value: f64, index: usize },

    #[error("cannot fit a scaler on a constant series: log range is zero")]
    ConstantSeries,

    #[error("invalid split: need 0 < train_end < val_end < length, got train_end={train_end}, val_end={val_end}, length={len}")]
    InvalidSplit {
        train_end: usize,
        val_end: usize,
        len: usize,
    },

    #[error("window must be at least 1")]
    ZeroWindow,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
