use nalgebra::DVector;
use thiserror::Error;

use crate::report::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },

    #[error("matrix {what} is not symmetric positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { what: String, pivot: usize, value: f64 },

    #[error("matrix {what} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { what: String, asymmetry: f64 },

    #[error("QP infeasible: {0}")]
    Infeasible(String),

    #[error("QP ill-conditioned: condition estimate {0:e}")]
    IllConditioned(f64),

    #[error("controller failed at t = {t}, p = {p:?}, v = {v:?}: {source}")]
    StepFailed {
        t: f64,
        p: Vec<f64>,
        v: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario schema error: {0}")]
    Schema(String),

    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension { what, expected, got }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// Attaches the state at which a controller evaluation failed.
    pub(crate) fn at_state(self, t: f64, p: &DVector<f64>, v: &DVector<f64>) -> Self {
        Error::StepFailed {
            t,
            p: p.iter().copied().collect(),
            v: v.iter().copied().collect(),
            source: Box::new(self),
        }
    }

    /// True when the root cause is an empty QP feasible region.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::Infeasible(_) => true,
            Error::StepFailed { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}
