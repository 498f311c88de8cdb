use thiserror::Error;

/// Errors produced by the mitigation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QemError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty Kraus operator list")]
    EmptyKraus,

    #[error("Kraus operators are not trace non-increasing (max eigenvalue of sum E^dag E = {0})")]
    NotTraceNonIncreasing(f64),

    #[error("invalid qubit support: {0}")]
    InvalidSupport(String),

    #[error("capacity exceeded: {qubits} qubits requested, exact simulation supports at most {limit}")]
    Capacity { qubits: usize, limit: usize },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),

    #[error("gate context required: {0}")]
    MissingGateContext(String),

    #[error("gate is not Clifford: {0}")]
    NotClifford(String),

    #[error("threshold violated: {0}")]
    Threshold(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing cost entry for {0}")]
    MissingCost(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, QemError>;
