use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter format error: {0}")]
    Format(String),
}

pub type Result<T, E = KernelError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(KernelError::Shape(msg.into()))
}
