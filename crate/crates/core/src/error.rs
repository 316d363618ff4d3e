//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A numeric parameter is outside its admissible domain.
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// A requested matching or bound is infeasible for the given moments.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A stated precondition of an operation is violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A series failed to reach its truncation certificate within the term cap.
    /// Carries the partial sum and the last tail bound that was attempted.
    #[error("series did not converge within {terms} terms (partial sum {partial:e}, tail bound {tail_bound:e})")]
    NonConvergence {
        partial: f64,
        tail_bound: f64,
        terms: usize,
    },

    /// The operation is not defined for the model's law representation.
    #[error("operation `{op}` is unsupported for this law: requires {requires}")]
    UnsupportedLaw {
        op: &'static str,
        requires: &'static str,
    },

    /// Exact enumeration would exceed the desk-scale state budget.
    #[error("joint state space of {states} states exceeds the enumeration limit of {limit}")]
    StateSpaceLimit { states: u64, limit: u64 },

    /// The common-shock sampler cannot realize the requested pair probabilities.
    #[error("common-shock construction infeasible: {0}")]
    ShockConstruction(String),

    /// Model description is structurally inconsistent (index sets, supports, masses).
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
