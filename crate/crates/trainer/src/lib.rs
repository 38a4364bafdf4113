//! Joint training of the router, experts and future-operation decoder,
//! plus inference, embedding export and checkpoint files.

mod checkpoint;
mod config;
mod error;
mod loss;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_MAGIC};
pub use config::{TrainConfig, Variant};
pub use error::{Result, TrainError};
pub use loss::{total_loss, trajectory_loss};
pub use model::{
    export_gates, export_trend_embeddings, predict_trajectory, predict_with_horizon, ModelState, Prepared,
    MODEL_FORMAT_VERSION,
};
pub use train::{batch_loss, fit, train_epoch, EpochStats, FitOutcome, LossParts};
