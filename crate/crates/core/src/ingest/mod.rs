//! Sensor log parsing, bias removal and dead reckoning.

mod bias;
mod dead_reckoning;
mod format;

use thiserror::Error;

use crate::models::ModelError;

pub use bias::{debias, estimate_bias, BiasEstimate};
pub use dead_reckoning::{dead_reckon, ZeroOrderHold};
pub use format::{
    format_header, format_record, log_to_string, parse_log, parse_log_str, sort_records,
    write_log, LandmarkSighting, LogHeader, ParseError, SensorLog, SensorPayload, SensorRecord,
    DEFAULT_MAX_RANGE, HEADER_MAGIC,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("no speed or gyro samples in the {0} s bias window")]
    NoSamplesInWindow(f64),
    #[error("bias window must be positive, got {0}")]
    InvalidWindow(f64),
    #[error("log has no speed or gyro records")]
    NoControl,
    #[error(transparent)]
    Model(#[from] ModelError),
}
