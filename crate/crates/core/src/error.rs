use thiserror::Error;

/// Errors produced by set projections, the ecCRM step, solvers and the harness.
#[derive(Debug, Error)]
pub enum CfpError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NonconvergedProjection { iterations: usize, residual: f64 },

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("no circumcenter: points are distinct and collinear (residual {residual:e})")]
    DegenerateCircumcenter { residual: f64 },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid step size {0}: must lie strictly inside (0, 1)")]
    InvalidStep(f64),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("invalid solver config: {0}")]
    InvalidConfig(String),

    #[error("numerical failure at iteration {iteration}: {source}")]
    NumericalFailure {
        iteration: usize,
        #[source]
        source: Box<CfpError>,
    },

    #[error("insufficient trace: {0}")]
    InsufficientTrace(String),

    #[error("empty input")]
    EmptyInput,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CfpError> = std::result::Result<T, E>;
