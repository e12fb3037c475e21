use std::fmt;

use thiserror::Error;

/// Structural conditions on the delay functional and the right-hand side
/// that are checked at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Total variation of the generating function is bounded by `M_Vg`.
    BoundedVariation,
    /// Atom positions lie in `[eta_ign(t), r]`.
    DelayRange,
    /// Variation of the continuous part is Lipschitz in `(t, psi)`.
    VariationLipschitz,
    /// Atom functionals ignore the most recent `eta_ign(t)` of history.
    IgnoreInterval,
    /// Step size does not exceed the ignore interval.
    StepBound,
    /// Measure is nonnegative with unit total weight.
    Normalization,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Condition::BoundedVariation => "bounded-variation condition",
            Condition::DelayRange => "delay-range condition",
            Condition::VariationLipschitz => "variation-Lipschitz condition",
            Condition::IgnoreInterval => "ignore-interval condition",
            Condition::StepBound => "step bound dt <= eta_ign",
            Condition::Normalization => "normalization condition",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{condition} violated: {detail}")]
    Contract { condition: Condition, detail: String },

    #[error("history does not cover [{start}, {end}]")]
    Coverage { start: f64, end: f64 },

    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: String, found: String },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("not applicable: {0}")]
    Inapplicable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn contract(condition: Condition, detail: impl Into<String>) -> Self {
        Error::Contract {
            condition,
            detail: detail.into(),
        }
    }

    pub fn is_contract(&self, condition: Condition) -> bool {
        matches!(self, Error::Contract { condition: c, .. } if *c == condition)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
