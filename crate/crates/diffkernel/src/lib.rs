//! Minimal differentiable-computation kernel.
//!
//! Everything runs in `f64` on dense row-major tensors. Forward passes are
//! recorded on a [`Graph`] tape; [`Graph::backward`] produces gradients that
//! are written into a [`ParamSet`] and consumed by [`adam_step`].

pub mod adam;
pub mod error;
pub mod func;
pub mod graph;
pub mod lstm;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{KernelError, Result};
pub use graph::{cv_value, Gradients, Graph, NodeId};
pub use lstm::{init_lstm, lstm_rollout, lstm_step, lstm_step_graph};
pub use params::{glorot_uniform, ParamEntry, ParamManifest, ParamSet, PARAM_FORMAT_VERSION};
pub use tensor::{affine, matmul, Tensor};
