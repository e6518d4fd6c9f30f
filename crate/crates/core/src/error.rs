use thiserror::Error;

use crate::solver::IterationTrace;

/// Errors raised by subspace construction, the solvers and instance generation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("inconsistent system: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    InconsistentSystem { residual: f64, tolerance: f64 },

    #[error("affine subspaces have an empty intersection (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    EmptyIntersection { residual: f64, tolerance: f64 },

    #[error("circumcenter system is inconsistent: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    DegenerateSystem { residual: f64, tolerance: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("stop rule requires a known reference solution")]
    MissingReference,

    #[error("iterate became non-finite at iteration {}", .trace.records.last().map_or(0, |r| r.iteration))]
    NumericalBreakdown { trace: Box<IterationTrace> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("coherence {0} outside [0, 1]")]
    InvalidCoherence(f64),

    #[error("invalid instance parameters: {0}")]
    InvalidInstance(String),

    #[error("unknown generator id {0:?}")]
    UnknownGenerator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
