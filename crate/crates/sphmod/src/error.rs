use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported dimension d={0}: need d >= 3")]
    UnsupportedDimension(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate rotation plane: {0}")]
    DegeneratePlane(String),
    #[error("non-finite value {value} at node {index} ({point:?})")]
    NonFinite { index: usize, point: Vec<f64>, value: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
