//! Forecast metrics, history-based baselines, expert-weight
//! classification, exact t-SNE and evaluation reports.

mod classify;
mod metrics;
mod mlp;
mod poly;
mod report;
mod tsne;

pub use classify::{
    calibrate_from_gates, classify_battery, confidence_table, stage_mean_weights, ClassLabel, Classification,
    ConfidenceRow, SohBucket,
};
pub use metrics::{compute_metrics, mean_metrics, MetricTriple};
pub use mlp::{mlp_pairs, MlpBaseline, MlpConfig};
pub use poly::poly_baseline;
pub use report::{
    aggregate, evaluate_history_forecaster, evaluate_model, latency_stats, BatteryMetrics, ConditionMetrics,
    EvalReport, LatencyStats, RunMeta, METRIC_UNITS,
};
pub use tsne::{conditional_probabilities, joint_probabilities, silhouette, tsne_embed, TsneConfig, TsneResult};

use diffkernel::KernelError;
use pimoe_data::{Stage, StageMap};
use pimoe_preprocess::Sample;
use pimoe_trainer::{export_gates, ModelState, TrainError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{points} points cannot fix a degree-{degree} polynomial")]
    Underdetermined { points: usize, degree: usize },
    #[error("stages share an expert: {0:?}")]
    CalibrationAmbiguous(StageMap),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Runs the model's router on labelled samples and calibrates the
/// stage-to-expert map from the noise-free gates.
pub fn calibrate_expert_stage_map(model: &ModelState, samples: &[Sample], stages: &[Stage]) -> Result<StageMap> {
    calibrate_from_gates(&export_gates(model, samples)?, stages)
}
