//! Wearable vitals: sample types, a seeded stream simulator, CSV ingestion and
//! the preprocessing applied before anything is encrypted (normalization and
//! scalar Kalman smoothing).

mod ingest;
mod kalman;
mod normalize;
mod simulate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest_csv, ingest_reader, IngestReport, RowError, CSV_HEADER};
pub use kalman::{kalman_filter, ScalarKalman, DEFAULT_MEASUREMENT_VARIANCE, DEFAULT_PROCESS_VARIANCE};
pub use normalize::{minmax, sample_std, zscore};
pub use simulate::{simulate_stream, DeviceProfile, SignalModel, AR_COEFFICIENT};

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("{metric} value {value} outside physical range [{lo}, {hi}]")]
    OutOfRange { metric: Metric, value: f64, lo: f64, hi: f64 },
    #[error("window is not homogeneous: expected {expected}, found {found}")]
    MixedMetrics { expected: Metric, found: Metric },
    #[error("timestamps must strictly increase ({prev} then {next})")]
    NonMonotonic { prev: i64, next: i64 },
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
}

/// Vital-sign kinds emitted by the simulated devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    HeartRateBpm,
    GlucoseMgDl,
    TemperatureC,
    Spo2Pct,
    StepsCount,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::HeartRateBpm,
        Metric::GlucoseMgDl,
        Metric::TemperatureC,
        Metric::Spo2Pct,
        Metric::StepsCount,
    ];

    /// Inclusive physical range accepted at ingestion.
    pub fn range(self) -> (f64, f64) {
        match self {
            Metric::HeartRateBpm => (20.0, 250.0),
            Metric::GlucoseMgDl => (20.0, 600.0),
            Metric::TemperatureC => (30.0, 45.0),
            Metric::Spo2Pct => (50.0, 100.0),
            Metric::StepsCount => (0.0, 10_000.0),
        }
    }

    pub fn category(self) -> Category {
        match self {
            Metric::HeartRateBpm => Category::HeartRate,
            Metric::GlucoseMgDl => Category::Glucose,
            Metric::TemperatureC => Category::Temperature,
            Metric::Spo2Pct => Category::OxygenSaturation,
            Metric::StepsCount => Category::Activity,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::HeartRateBpm => "heart_rate_bpm",
            Metric::GlucoseMgDl => "glucose_mg_dl",
            Metric::TemperatureC => "temperature_c",
            Metric::Spo2Pct => "spo2_pct",
            Metric::StepsCount => "steps_count",
        }
    }

    pub fn index(self) -> usize {
        Metric::ALL.iter().position(|m| *m == self).unwrap_or(0)
    }

    pub fn check_range(self, value: f64) -> Result<(), TelemetryError> {
        let (lo, hi) = self.range();
        if value.is_finite() && value >= lo && value <= hi {
            Ok(())
        } else {
            Err(TelemetryError::OutOfRange { metric: self, value, lo, hi })
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = TelemetryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| TelemetryError::UnknownMetric(s.to_string()))
    }
}

/// Data-category tag used by consent policies and DP sensitivity tiers.
///
/// Unrecognized category names deserialize to `Unknown` so that a request
/// naming one can be denied with a diagnostic instead of failing to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    HeartRate,
    Glucose,
    Temperature,
    OxygenSaturation,
    Activity,
    #[serde(other)]
    Unknown,
}

impl Category {
    pub const KNOWN: [Category; 5] = [
        Category::HeartRate,
        Category::Glucose,
        Category::Temperature,
        Category::OxygenSaturation,
        Category::Activity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::HeartRate => "heart_rate",
            Category::Glucose => "glucose",
            Category::Temperature => "temperature",
            Category::OxygenSaturation => "oxygen_saturation",
            Category::Activity => "activity",
            Category::Unknown => "unknown",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Category::HeartRate => 1,
            Category::Glucose => 2,
            Category::Temperature => 3,
            Category::OxygenSaturation => 4,
            Category::Activity => 5,
            Category::Unknown => 0,
        }
    }

    pub fn from_code(code: u8) -> Category {
        Category::KNOWN
            .into_iter()
            .find(|c| c.code() == code)
            .unwrap_or(Category::Unknown)
    }

    pub fn metric(self) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.category() == self)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Category::KNOWN
            .into_iter()
            .find(|c| c.as_str() == s)
            .unwrap_or(Category::Unknown))
    }
}

/// One timestamped reading from a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub device_id: String,
    pub user_id: String,
    pub metric: Metric,
    pub timestamp_ms: i64,
    pub value: f64,
    pub category: Category,
}

/// An ordered run of samples of a single metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    metric: Metric,
    samples: Vec<Sample>,
}

impl Window {
    pub fn new(samples: Vec<Sample>) -> Result<Self, TelemetryError> {
        let first = samples
            .first()
            .ok_or(TelemetryError::InsufficientData { needed: 1, got: 0 })?;
        let metric = first.metric;
        for pair in samples.windows(2) {
            if pair[1].metric != metric {
                return Err(TelemetryError::MixedMetrics { expected: metric, found: pair[1].metric });
            }
            if pair[1].timestamp_ms <= pair[0].timestamp_ms {
                return Err(TelemetryError::NonMonotonic {
                    prev: pair[0].timestamp_ms,
                    next: pair[1].timestamp_ms,
                });
            }
        }
        Ok(Window { metric, samples })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    pub fn zscore_normalize(&self) -> Result<Vec<f64>, TelemetryError> {
        zscore(&self.values())
    }

    pub fn minmax_normalize(&self) -> Result<Vec<f64>, TelemetryError> {
        minmax(&self.values())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(metric: Metric, ts: i64, value: f64) -> Sample {
        Sample {
            device_id: "d".into(),
            user_id: "u".into(),
            metric,
            timestamp_ms: ts,
            value,
            category: metric.category(),
        }
    }

    #[test]
    fn window_rejects_mixed_and_unordered() {
        let mixed = vec![sample(Metric::HeartRateBpm, 0, 70.0), sample(Metric::Spo2Pct, 1, 97.0)];
        assert!(matches!(Window::new(mixed), Err(TelemetryError::MixedMetrics { .. })));
        let unordered = vec![sample(Metric::HeartRateBpm, 5, 70.0), sample(Metric::HeartRateBpm, 5, 71.0)];
        assert!(matches!(Window::new(unordered), Err(TelemetryError::NonMonotonic { .. })));
        assert!(Window::new(vec![]).is_err());
    }

    #[test]
    fn window_normalizes() {
        let w = Window::new(vec![
            sample(Metric::HeartRateBpm, 0, 10.0),
            sample(Metric::HeartRateBpm, 1, 20.0),
            sample(Metric::HeartRateBpm, 2, 30.0),
        ])
        .unwrap();
        assert_eq!(w.minmax_normalize().unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(w.zscore_normalize().unwrap(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_category_parses() {
        let c: Category = serde_json::from_str("\"genome\"").unwrap();
        assert_eq!(c, Category::Unknown);
        let c: Category = serde_json::from_str("\"glucose\"").unwrap();
        assert_eq!(c, Category::Glucose);
        assert_eq!("heart_rate_bpm".parse::<Metric>().unwrap(), Metric::HeartRateBpm);
    }

    #[test]
    fn physical_range_check() {
        assert!(Metric::HeartRateBpm.check_range(20.0).is_ok());
        assert!(Metric::HeartRateBpm.check_range(251.0).is_err());
        assert!(Metric::HeartRateBpm.check_range(f64::NAN).is_err());
    }
}
