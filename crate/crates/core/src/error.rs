use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One broken invariant found by [`crate::run_model::validate_run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// The trial, config, hyperparameter or objective the violation is about.
    pub subject: String,
    pub detail: String,
}

impl Violation {
    pub fn new(subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.detail)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown objective `{0}`")]
    UnknownObjective(String),

    #[error("unknown hyperparameter `{0}`")]
    UnknownHyperparameter(String),

    #[error("budget {0} is not one of the run's budgets")]
    UnknownBudget(f64),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("insufficient data: need at least {needed} successful trials, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no incumbent: {0}")]
    NoIncumbent(String),

    #[error("incompatible runs: {0}")]
    Incompatible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value out of bounds: {0}")]
    OutOfBounds(String),

    #[error("{file}:{line}: field `{field}`: {message}")]
    Schema {
        file: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("run failed validation: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Stable snake_case identifier of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownObjective(_) => "unknown_objective",
            Error::UnknownHyperparameter(_) => "unknown_hyperparameter",
            Error::UnknownBudget(_) => "unknown_budget",
            Error::EmptySelection(_) => "empty_selection",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::NoIncumbent(_) => "no_incumbent",
            Error::Incompatible(_) => "incompatible",
            Error::InvalidInput(_) => "invalid_input",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::OutOfBounds(_) => "out_of_bounds",
            Error::Schema { .. } => "schema",
            Error::Validation(_) => "validation",
            Error::Io(_) => "io",
        }
    }
}
