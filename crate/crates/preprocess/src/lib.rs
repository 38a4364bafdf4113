//! Turns raw battery series into model samples: outlier-cycle removal,
//! fixed-grid charge and relaxation vectors, sliding-window samples and
//! train-fitted min-max scaling of the feature columns.

mod clean;
mod curves;
mod norm;
mod samples;

pub use clean::{clean_cycles, clean_cycles_with, CleanConfig, CleanLog, RemovalReason, Removed};
pub use curves::{build_charge_vector, sample_relaxation};
pub use norm::{apply_norm, fit_norm, NormStats};
pub use samples::{build_samples, cycle_sample, Sample, SampleConfig, VStartPolicy};

use pimoe_features::FeatureError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("malformed cycle: {0}")]
    MalformedCycle(String),
    #[error("relaxation too short: {0}")]
    InsufficientRelaxation(String),
    #[error("horizon {horizon} needs more than {cycles} cycles")]
    HorizonTooLong { horizon: usize, cycles: usize },
    #[error("normalization applied before fitting")]
    NotFitted,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub type Result<T, E = PreprocessError> = std::result::Result<T, E>;
