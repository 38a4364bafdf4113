//! Adaptive multi-degradation prediction: a noisy top-k router over the
//! physics features picks a sparse mix of expert networks, each mapping the
//! charge vector to a short degradation trend, and the trend is their
//! gate-weighted sum.

mod gate;
mod graph;
mod trend;

pub use gate::{gate_weights, history_mode_logits, importance_cv_loss, router_logits, top_k_mask, GateOutput};
pub use graph::{amdp_graph, linear_trend_graph, AmdpBatch};
pub use trend::{
    amdp_trend, expert_forward, expert_names, init_amdp, init_linear_trend, linear_trend, AmdpConfig, LINEAR_TREND,
    W_GATE, W_NOISE,
};

use diffkernel::KernelError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmdpError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T, E = AmdpError> = std::result::Result<T, E>;
