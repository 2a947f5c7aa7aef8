use thiserror::Error;

/// Errors shared across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("ground-set mismatch: left k={left}, right k={right}")]
    GroundSetMismatch { left: usize, right: usize },

    #[error("measure has zero total mass")]
    ZeroMass,

    #[error("invalid measure family: {0}")]
    InvalidFamily(String),

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("not a (1+{eps})-embedding: measured distortion {measured}")]
    NotAnEmbedding { eps: f64, measured: f64 },

    #[error("invalid source metric: {0}")]
    InvalidSource(String),

    #[error("certificate violation in `{check}`: lhs={lhs}, rhs={rhs}")]
    CertificateViolation { check: String, lhs: f64, rhs: f64 },

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("calibration failed: requested eps={requested}, achieved {achieved}")]
    Calibration { requested: f64, achieved: f64 },

    #[error("postcondition failed in {op}: {detail}")]
    Postcondition { op: &'static str, detail: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
