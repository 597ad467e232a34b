use std::path::PathBuf;

/// Errors raised by grid construction, obstacle evaluation and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("point {point:?} lies outside the domain [{lo}, {hi}]^{dim}")]
    OutOfDomain {
        point: Vec<f64>,
        lo: f64,
        hi: f64,
        dim: usize,
    },

    #[error("malformed grid file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
