use thiserror::Error;

/// Errors raised by geometry, map, fluid and catalog operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("metric is degenerate at {point:?}")]
    DegenerateMetric { point: Vec<f64> },

    #[error("metric signature mismatch at {point:?}: expected ({neg} negative, {pos} positive), found ({found_neg}, {found_pos})")]
    Signature {
        point: Vec<f64>,
        neg: usize,
        pos: usize,
        found_neg: usize,
        found_pos: usize,
    },

    #[error("causal degeneracy: {0}")]
    CausalDegeneracy(String),

    #[error("rank deficiency: expected rank {expected}, found {found}")]
    RankDeficient { expected: usize, found: usize },

    #[error("point {point:?} is outside the chart (margin {margin:.3e})")]
    OutsideChart { point: Vec<f64>, margin: f64 },

    #[error("finite-difference stencil leaves the chart at {point:?}")]
    StencilOutsideChart { point: Vec<f64> },

    #[error("input regime error: {0}")]
    Regime(String),

    #[error("equation of state is singular: {0}")]
    EosSingular(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("ODE integration failed at t = {at}: {reason}")]
    Integration { at: f64, reason: String, last_value: Vec<f64> },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown case `{0}`")]
    UnknownCase(String),

    #[error("invalid case definition: {0}")]
    InvalidCase(String),

    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("admissibility failure: {0}")]
    Admissibility(String),
}

pub type Result<T> = std::result::Result<T, Error>;
