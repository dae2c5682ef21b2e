//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed CSV row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("duplicate timestamp {time} in input")]
    DuplicateTimestamp { time: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("series is invalid: {0}")]
    InvalidSeries(String),

    #[error("non-positive value {value} at time {time}")]
    NonPositiveValue { time: f64, value: f64 },

    #[error("series share no timestamps")]
    EmptyOverlap,

    #[error("interpolation target {time} lies outside the source span [{lo}, {hi}]")]
    Extrapolation { time: f64, lo: f64, hi: f64 },

    #[error("zero denominator at shared timestamp {time}")]
    ZeroDenominator { time: f64 },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("time {time} is not strictly before the critical time {tc}")]
    PastCriticalTime { time: f64, tc: f64 },

    #[error("design matrix is rank deficient for (tc, m, omega) = ({tc}, {m}, {omega})")]
    DegenerateDesign { tc: f64, m: f64, omega: f64 },

    #[error("no valid fits in ensemble; interpret the diagnosis as NoBubble")]
    NoValidFits,

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("only {got} overlapping points at lag {lag}, need at least {needed}")]
    InsufficientOverlap { lag: i64, got: usize, needed: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("every grid node was inadmissible")]
    AllNodesInadmissible,

    #[error("all calibration starts failed: {0}")]
    AllStartsFailed(String),
}
