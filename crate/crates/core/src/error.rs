use thiserror::Error;

/// Errors raised by the geometric and stochastic routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("retraction failure at input {input:?}: {reason}")]
    RetractionFailure { input: Vec<f64>, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("constant-rank violation: expected rank {expected}, found {found} at {point:?}")]
    ConstantRankViolation {
        expected: usize,
        found: usize,
        point: Vec<f64>,
    },

    #[error("domain error: {what} (residual {residual:.3e})")]
    Domain { what: String, residual: f64 },

    #[error("curvature FD unstable: relative change {relative_change:.3e} between steps")]
    CurvatureUnstable { relative_change: f64 },

    #[error("splitting degenerate: {0}")]
    SplittingDegenerate(String),

    #[error("step-size error at step {step}: increment norm {norm:.3e} exceeds 1")]
    StepSize { step: usize, norm: f64 },

    #[error("frame degenerate at t = {time}: condition number {condition:.3e}")]
    FrameDegenerate { time: f64, condition: f64 },

    #[error("integration aborted at step {step}: {source}")]
    Integration { step: usize, source: Box<Error> },

    #[error("order estimate unreliable: {0}")]
    OrderUnreliable(String),

    #[error("insufficient N: standard error {standard_error:.3e} exceeds signal {signal:.3e}")]
    InsufficientSamples { standard_error: f64, signal: f64 },

    #[error("inverse grid insufficient: interpolation residual {residual:.3e}")]
    InverseGridInsufficient { residual: f64 },

    #[error("equivariance probe failed: defect {defect:.3e}")]
    NotEquivariant { defect: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
