use std::path::PathBuf;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A row of a station file could not be parsed.
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    /// An I/O failure while reading or writing a file.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The input data violates a precondition (gaps, lengths, ranges).
    #[error("data error: {0}")]
    Data(String),
    /// A parameter or configuration value is outside its admissible set.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A configuration file entry is malformed or missing.
    #[error("config error: {0}")]
    Config(String),
    /// A linear system could not be solved.
    #[error("linear algebra: {0}")]
    LinearAlgebra(&'static str),
    /// None of the candidate model fits converged.
    #[error("no candidate fit converged")]
    NoConvergence,
    /// A moment of the innovation law does not exist for the given parameters.
    #[error("moment does not exist: delta {delta} >= nu {nu}")]
    MomentDoesNotExist { delta: f64, nu: f64 },
    /// Standard errors were requested but the Hessian was not positive definite.
    #[error("standard errors unavailable")]
    MissingStdErrors,
    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}
