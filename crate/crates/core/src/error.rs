use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside {range}")]
    ParameterOutOfRange { name: &'static str, value: f64, range: &'static str },

    #[error("a mechanism needs at least 2 answers, got {0}")]
    TooFewAnswers(usize),

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("entry ({row}, {col}) = {value} is not a probability")]
    InvalidEntry { row: usize, col: usize, value: f64 },

    #[error("row {row} sums to {sum}, expected 1 within {tolerance:e}")]
    NotRowStochastic { row: usize, sum: f64, tolerance: f64 },

    #[error("answer {answer} is out of range for a {m}-answer mechanism")]
    AnswerOutOfRange { answer: usize, m: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular matrix for {mechanism}: |det| = {det:e}")]
    SingularMatrix { mechanism: String, det: f64 },

    #[error("excluded parameter: {0}")]
    ExcludedParameter(String),

    #[error("cannot compose an empty list of budgets")]
    EmptyComposition,

    #[error("privacy budget is unbounded: {0}")]
    UnboundedBudget(String),

    #[error("privacy budget must be positive and finite, got {0}")]
    NonPositiveBudget(f64),

    #[error("invalid proportions: {0}")]
    InvalidProportions(String),

    #[error("invalid counts: {0}")]
    InvalidCounts(String),

    #[error("numeric MLE did not converge after {iterations} iterations (score norm {score_norm:e})")]
    NoConvergence { iterations: usize, score_norm: f64 },

    #[error("boundary set is undefined for epsilon = {0}; it needs 0 < epsilon < ln 3")]
    BoundaryUndefined(f64),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid protocol parameters: {0}")]
    InvalidProtocol(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Checks that `value` is a probability in the closed unit interval.
pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::ParameterOutOfRange { name, value, range: "[0, 1]" })
    }
}

pub(crate) fn check_budget(value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::NonPositiveBudget(value))
    }
}
