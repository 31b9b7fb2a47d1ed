use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    /// The requested value lies above `f(bracket_hi)`; the working interval must grow.
    #[error("value {y} is above the range of the function on [0, {bracket_hi}] (f(hi) = {f_hi})")]
    Range { y: f64, bracket_hi: f64, f_hi: f64 },

    /// A lookup reached further into the past than the history covers.
    #[error("history lookup at s = {s} precedes the earliest recorded time {earliest}")]
    HistoryUnderflow { s: f64, earliest: f64 },

    #[error("trajectory evaluated at t = {t} beyond its front {front}")]
    OutOfRange { t: f64, front: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Failed model assumption or malformed configuration; `key` names the offending item.
    #[error("{key}: {message}")]
    Validation { key: String, message: String },

    #[error("step size too large: integration diverged at t = {t} ({reason})")]
    StepDivergence { t: f64, reason: String },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("the production pair has no single positive equilibrium (witnesses {witnesses:?})")]
    Unresolved { witnesses: Vec<f64> },

    /// The bound recursion lost monotonicity at the given step.
    #[error("bound sequence stalled at step {step}: {reason}")]
    Stall { step: usize, reason: String },
}

impl Error {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse(_) | Error::Validation { .. } | Error::InvalidArgument(_)
        )
    }
}

/// Outcome of a sampled assumption check.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict<C, V> {
    Certified(C),
    Violated(V),
}

impl<C, V> Verdict<C, V> {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::Certified(_))
    }

    pub fn certificate(self) -> Option<C> {
        match self {
            Verdict::Certified(c) => Some(c),
            Verdict::Violated(_) => None,
        }
    }

    pub fn violation(self) -> Option<V> {
        match self {
            Verdict::Certified(_) => None,
            Verdict::Violated(v) => Some(v),
        }
    }
}
