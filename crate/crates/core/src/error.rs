//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("domain error evaluating `{expr}`: {reason}")]
    Domain { expr: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("momentum must be nonzero (slit bundle)")]
    ZeroMomentum,

    #[error("K^2 is not positive at the sample point (K^2 = {k2})")]
    NonPositiveK { k2: f64 },

    #[error("metric Hessian is numerically singular (condition number {cond:.3e})")]
    SingularMetric { cond: f64 },

    #[error("cannot differentiate: {0}")]
    Derivative(String),

    #[error("degenerate frame: no usable pivot (max |l^i| = {max_ell:.3e})")]
    DegenerateFrame { max_ell: f64 },

    #[error("pivot margin too small: runner-up |l^i| is {ratio:.3} of the pivot")]
    PivotMargin { ratio: f64 },

    #[error("tangent vectors based at different phase points")]
    BasePointMismatch,

    #[error("vector is not tangent to the level set (normal component {residual:.3e})")]
    NonTangent { residual: f64 },

    #[error("insufficient sample points: need {needed}, have {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("curvature fit is indefinite: angular metric is negligible on the sample")]
    IndefiniteFit,

    #[error("sampling budget exhausted: accepted {accepted} of {requested} points")]
    AllPointsRejected { accepted: usize, requested: usize },

    #[error("symbolic pipeline supports dim <= 3, got {dim}; only pointwise metric/connection values are available above that")]
    SymbolicUnavailable { dim: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("oracle failure: {0}")]
    Oracle(String),
}

pub type Result<T> = std::result::Result<T, Error>;
