use pimoe_amdp::AmdpError;
use diffkernel::KernelError;
use pimoe_fornn::FornnError;
use pimoe_preprocess::PreprocessError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model contract violated: {0}")]
    ModelContract(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    TrainingDiverged { epoch: usize, batch: usize, loss: f64 },
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),
    #[error("checkpoint checksum mismatch: {0}")]
    ChecksumError(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Amdp(#[from] AmdpError),
    #[error(transparent)]
    Fornn(#[from] FornnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e.to_string())
    }
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;
