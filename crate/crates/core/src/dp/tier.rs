use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DpError;
use crate::telemetry::Category;

pub const EPSILON_MIN: f64 = 0.1;
pub const EPSILON_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityTier {
    Low,
    Medium,
    High,
}

impl SensitivityTier {
    pub fn default_epsilon(self) -> f64 {
        match self {
            SensitivityTier::Low => 1.0,
            SensitivityTier::Medium => 0.5,
            SensitivityTier::High => 0.1,
        }
    }
}

/// Category to tier assignment. Unlisted categories fall back to `High`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierMap(pub BTreeMap<Category, SensitivityTier>);

impl Default for TierMap {
    fn default() -> Self {
        TierMap(BTreeMap::from([
            (Category::HeartRate, SensitivityTier::Medium),
            (Category::Glucose, SensitivityTier::High),
            (Category::Temperature, SensitivityTier::Low),
            (Category::OxygenSaturation, SensitivityTier::Medium),
            (Category::Activity, SensitivityTier::Low),
        ]))
    }
}

impl TierMap {
    pub fn tier(&self, category: Category) -> SensitivityTier {
        self.0.get(&category).copied().unwrap_or(SensitivityTier::High)
    }
}

/// `min(preference, tier default)`, clamped to `[0.1, 1.0]`.
pub fn calibrate_epsilon(tier: SensitivityTier, preference: Option<f64>) -> Result<f64, DpError> {
    let default = tier.default_epsilon();
    let eps = match preference {
        None => default,
        Some(p) if (EPSILON_MIN..=EPSILON_MAX).contains(&p) => p.min(default),
        Some(p) => return Err(DpError::PreferenceOutOfRange(p)),
    };
    Ok(eps.clamp(EPSILON_MIN, EPSILON_MAX))
}
