//! Twelve-value feature vector built from one cycle's charge and rest
//! curves: six relaxation statistics, four charge-curve statistics, the
//! charge taken up over a small voltage rise and the voltage rise over a
//! fixed charge increment.

mod assemble;
mod physics;
mod stats;

pub use assemble::{assemble_features, FeatureMode, FeatureParams, FeatureVector, FEATURE_NAMES};
pub use physics::{dv_at_dq, q_at_dv};
pub use stats::{stat_features, StatSummary};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = FeatureError> = std::result::Result<T, E>;
