use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index out of domain: {0}")]
    IndexDomain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("matrix is not positive semi-definite (smallest eigenvalue {lambda_min:e}, tolerance {tolerance:e})")]
    NotPsd { lambda_min: f64, tolerance: f64 },

    #[error("component {component} is degenerate: its diagonal scale is zero, so no estimator of alpha or Sigma[{component},{component}] is defined")]
    Degenerate { component: usize },

    #[error("location estimate failed for component {component}: real part of the empirical characteristic function is zero")]
    MuEstimation { component: usize },

    #[error("finite-difference Jacobian failed at coordinate {coordinate}: {reason}")]
    FdFailure { coordinate: usize, reason: String },

    #[error("covariance assembly failed: {0}")]
    Assembly(String),

    #[error("experiment cell (alpha={alpha}, n={n}) failed: {failures} of {replications} replications produced non-finite estimates")]
    CellFailed {
        alpha: f64,
        n: usize,
        failures: usize,
        replications: usize,
    },

    #[error("i/o: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
