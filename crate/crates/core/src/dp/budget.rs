use rand::Rng;
use serde::{Deserialize, Serialize};

use super::laplace::laplace_sample;
use super::query::{sensitivity, true_answer, Query};
use super::DpError;

const NANO: f64 = 1e9;

fn to_nano(eps: f64) -> u64 {
    (eps * NANO).round() as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spend {
    pub query_id: String,
    pub epsilon_nano: u64,
}

/// Per-user ε accountant under sequential composition. Amounts are kept in
/// integer nano-ε so that repeated debits sum exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub user_id: String,
    capacity_nano: u64,
    spent: Vec<Spend>,
}

impl PrivacyBudget {
    pub fn new(user_id: impl Into<String>, capacity: f64) -> Result<Self, DpError> {
        if !(capacity >= 0.0 && capacity.is_finite()) {
            return Err(DpError::Params(format!("budget capacity {capacity} must be non-negative")));
        }
        Ok(PrivacyBudget { user_id: user_id.into(), capacity_nano: to_nano(capacity), spent: Vec::new() })
    }

    pub fn capacity(&self) -> f64 {
        self.capacity_nano as f64 / NANO
    }

    fn spent_nano(&self) -> u64 {
        self.spent.iter().map(|s| s.epsilon_nano).sum()
    }

    pub fn spent(&self) -> f64 {
        self.spent_nano() as f64 / NANO
    }

    pub fn remaining(&self) -> f64 {
        (self.capacity_nano - self.spent_nano()) as f64 / NANO
    }

    pub fn history(&self) -> &[Spend] {
        &self.spent
    }

    pub fn can_afford(&self, epsilon: f64) -> bool {
        epsilon > 0.0 && to_nano(epsilon) <= self.capacity_nano - self.spent_nano()
    }

    /// Debit `epsilon` or fail without changing anything.
    pub fn debit(&mut self, query_id: impl Into<String>, epsilon: f64) -> Result<(), DpError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(DpError::Params(format!("epsilon must be positive, got {epsilon}")));
        }
        if !self.can_afford(epsilon) {
            return Err(DpError::BudgetExhausted { requested: epsilon, remaining: self.remaining() });
        }
        self.spent.push(Spend { query_id: query_id.into(), epsilon_nano: to_nano(epsilon) });
        Ok(())
    }
}

/// Record of one noisy release.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Release {
    pub query: Query,
    pub epsilon: f64,
    /// Laplace scale Δ/ε applied to every released value.
    pub scale: f64,
    pub timestamp: i64,
    pub budget_remaining: f64,
    pub values: Vec<f64>,
}

/// Answer `q` on `data` with Laplace noise at scale Δ/ε and debit ε once.
/// Nothing is computed or debited when the budget cannot cover ε.
pub fn privatize<R: Rng + ?Sized>(
    q: &Query,
    data: &[f64],
    epsilon: f64,
    budget: &mut PrivacyBudget,
    rng: &mut R,
    timestamp: i64,
) -> Result<Release, DpError> {
    sensitivity(q)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(DpError::Params(format!("epsilon must be positive, got {epsilon}")));
    }
    if !budget.can_afford(epsilon) {
        return Err(DpError::BudgetExhausted { requested: epsilon, remaining: budget.remaining() });
    }
    let exact = true_answer(q, data)?;
    release_exact(q, exact, epsilon, budget, rng, timestamp)
}

/// Noise an answer to `q` that was computed elsewhere (for example from a
/// homomorphic aggregate). The caller is responsible for `exact` being the
/// true answer of `q`, including clamping to the query bounds.
pub fn release_exact<R: Rng + ?Sized>(
    q: &Query,
    exact: Vec<f64>,
    epsilon: f64,
    budget: &mut PrivacyBudget,
    rng: &mut R,
    timestamp: i64,
) -> Result<Release, DpError> {
    let delta = sensitivity(q)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(DpError::Params(format!("epsilon must be positive, got {epsilon}")));
    }
    if !budget.can_afford(epsilon) {
        return Err(DpError::BudgetExhausted { requested: epsilon, remaining: budget.remaining() });
    }
    if exact.iter().any(|v| !v.is_finite()) {
        return Err(DpError::DataMismatch("exact answer is not finite".into()));
    }
    let scale = delta / epsilon;
    let values = exact
        .into_iter()
        .map(|v| laplace_sample(scale, rng).map(|n| v + n))
        .collect::<Result<Vec<_>, _>>()?;
    budget.debit(format!("{}-{}", q.name(), budget.history().len()), epsilon)?;
    Ok(Release { query: q.clone(), epsilon, scale, timestamp, budget_remaining: budget.remaining(), values })
}
