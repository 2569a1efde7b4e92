use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Metric, Sample, TelemetryError};

/// Autocorrelation of the AR(1) jitter around each metric's baseline.
pub const AR_COEFFICIENT: f64 = 0.9;

const DAY_MS: f64 = 86_400_000.0;

/// Per-metric signal: `baseline + amplitude * sin(2*pi*t/day) + ar1_jitter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub metric: Metric,
    pub baseline: f64,
    #[serde(default)]
    pub amplitude: f64,
    pub noise_std: f64,
}

impl SignalModel {
    pub fn typical(metric: Metric) -> Self {
        let (baseline, amplitude, noise_std) = match metric {
            Metric::HeartRateBpm => (72.0, 8.0, 3.0),
            Metric::GlucoseMgDl => (100.0, 15.0, 4.0),
            Metric::TemperatureC => (36.8, 0.4, 0.05),
            Metric::Spo2Pct => (97.0, 0.5, 0.6),
            Metric::StepsCount => (20.0, 15.0, 6.0),
        };
        SignalModel { metric, baseline, amplitude, noise_std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub device_id: String,
    pub user_id: String,
    pub metrics: Vec<SignalModel>,
    pub sampling_period_ms: i64,
    #[serde(default)]
    pub start_ms: i64,
    pub seed: u64,
}

impl DeviceProfile {
    /// A device emitting every metric with typical parameters at 1 Hz.
    pub fn typical(device_id: impl Into<String>, user_id: impl Into<String>, seed: u64) -> Self {
        DeviceProfile {
            device_id: device_id.into(),
            user_id: user_id.into(),
            metrics: Metric::ALL.into_iter().map(SignalModel::typical).collect(),
            sampling_period_ms: 1000,
            start_ms: 0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        if self.sampling_period_ms <= 0 {
            return Err(TelemetryError::Config(format!(
                "sampling period must be positive, got {}",
                self.sampling_period_ms
            )));
        }
        if self.metrics.is_empty() {
            return Err(TelemetryError::Config("profile emits no metrics".into()));
        }
        for m in &self.metrics {
            if !(m.noise_std.is_finite() && m.noise_std >= 0.0) || !m.baseline.is_finite() || !m.amplitude.is_finite() {
                return Err(TelemetryError::Config(format!("invalid signal model for {}", m.metric)));
            }
        }
        Ok(())
    }
}

/// Deterministically generate `floor(duration / period)` samples per metric.
///
/// Samples are ordered by timestamp, then by the profile's metric order.
pub fn simulate_stream(profile: &DeviceProfile, duration_ms: i64) -> Result<Vec<Sample>, TelemetryError> {
    profile.validate()?;
    if duration_ms <= 0 {
        return Err(TelemetryError::Config(format!("duration must be positive, got {duration_ms}")));
    }
    let count = (duration_ms / profile.sampling_period_ms) as usize;
    let mut generators: Vec<(ChaCha8Rng, f64)> = profile
        .metrics
        .iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
            rng.set_stream(m.metric.index() as u64 + 1);
            let stationary = m.noise_std / (1.0 - AR_COEFFICIENT * AR_COEFFICIENT).sqrt();
            let z: f64 = StandardNormal.sample(&mut rng);
            (rng, stationary * z)
        })
        .collect();

    let mut out = Vec::with_capacity(count * profile.metrics.len());
    for i in 0..count {
        let ts = profile.start_ms + i as i64 * profile.sampling_period_ms;
        for (model, (rng, jitter)) in profile.metrics.iter().zip(generators.iter_mut()) {
            if i > 0 {
                let z: f64 = StandardNormal.sample(rng);
                *jitter = AR_COEFFICIENT * *jitter + model.noise_std * z;
            }
            let drift = model.amplitude * (TAU * ts as f64 / DAY_MS).sin();
            let (lo, hi) = model.metric.range();
            let value = (model.baseline + drift + *jitter).clamp(lo, hi);
            out.push(Sample {
                device_id: profile.device_id.clone(),
                user_id: profile.user_id.clone(),
                metric: model.metric,
                timestamp_ms: ts,
                value,
                category: model.metric.category(),
            });
        }
    }
    Ok(out)
}
