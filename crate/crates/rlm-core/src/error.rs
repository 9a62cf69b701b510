//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions of an argument do not match the manifold or problem.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Two tangent vectors (or a tangent and a point) disagree on the base point.
    #[error("base point mismatch in tangent operation")]
    BaseMismatch,

    /// A point failed the manifold membership test.
    #[error("point not on manifold: {0}")]
    NotOnManifold(String),

    /// A vector failed the tangency test at its base point.
    #[error("vector not tangent at base point: {0}")]
    NotTangent(String),

    /// The fixed-rank retraction produced a core with numerical rank below k.
    #[error("rank drop in retraction: sigma_k/sigma_1 = {ratio:.3e}")]
    RankDrop { ratio: f64 },

    /// A residual or operator evaluation produced a non-finite value.
    #[error("non-finite value at index {index} during {context}")]
    NonFiniteEval { index: usize, context: &'static str },

    /// The predicted model decrease underflowed; the ratio test is undefined.
    #[error("degenerate model decrease: {0:.3e}")]
    DegenerateModelDecrease(f64),

    /// Too few usable values to fit a convergence order.
    #[error("insufficient data for order estimation: need {need}, got {got}")]
    InsufficientData { need: usize, got: usize },

    /// A configuration value violates its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A generator was asked for an instance that cannot exist.
    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
