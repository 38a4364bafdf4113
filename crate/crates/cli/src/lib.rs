//! Command implementations behind the `pimoe` binary. Each command reads
//! its inputs, validates the whole configuration first, and writes
//! deterministic outputs; wall-clock measurements go to `timing.json`.

pub mod archive;
mod commands;
pub mod config;
pub mod csvio;

pub use archive::{clean_dataset, load_archive, save_archive, Archive, Manifest};
pub use commands::{
    cmd_analyze, cmd_classify, cmd_evaluate, cmd_ingest, cmd_predict, cmd_synth, cmd_train, sample_stages,
    samples_for, Baseline, EvaluateArgs, PredictArgs, PredictOutcome, Subset, TrainOutcome,
};
pub use config::{parse_variant, RunConfig, StageThresholds, SEED_ENV};
pub use csvio::{emit_dataset, emit_truth, ingest_dataset, ingest_truth, Truth};

use pimoe_evalkit::EvalError;
use pimoe_trainer::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{file}, line {row}: {msg}")]
    Ingest { file: String, row: u64, msg: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Ingest { .. } | CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Config(e.to_string()),
            TrainError::TrainingDiverged { .. } => CliError::Diverged(e.to_string()),
            TrainError::Io(m) => CliError::Io(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Train(t) => t.into(),
            EvalError::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
