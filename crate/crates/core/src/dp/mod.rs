//! Pure ε-differential privacy for released aggregates.
//!
//! Laplace noise at scale Δ/ε, per-user budgets under sequential composition,
//! and an empirical harness that estimates the privacy loss of a mechanism
//! from samples.

mod budget;
mod empirical;
mod laplace;
mod query;
mod tier;

use thiserror::Error;

pub use budget::{privatize, release_exact, PrivacyBudget, Release, Spend};
pub use empirical::{empirical_epsilon_check, EmpiricalReport, DEFAULT_BUCKETS, EMPIRICAL_SLACK, MIN_TRIALS};
pub use laplace::{laplace_from_uniform, laplace_sample};
pub use query::{sensitivity, true_answer, Query};
pub use tier::{calibrate_epsilon, SensitivityTier, TierMap, EPSILON_MAX, EPSILON_MIN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("parameter error: {0}")]
    Params(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("unsupported query: {0}")]
    UnsupportedQuery(String),
    #[error("privacy preference {0} outside the valid range [0.1, 1.0]")]
    PreferenceOutOfRange(f64),
    #[error("privacy budget exhausted: requested {requested}, remaining {remaining}")]
    BudgetExhausted { requested: f64, remaining: f64 },
    #[error("data does not match query: {0}")]
    DataMismatch(String),
}
