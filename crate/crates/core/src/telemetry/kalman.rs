use super::TelemetryError;

pub const DEFAULT_PROCESS_VARIANCE: f64 = 0.01;
pub const DEFAULT_MEASUREMENT_VARIANCE: f64 = 1.0;

/// Constant-state scalar Kalman filter.
///
/// The first measurement initializes the estimate with covariance `r`.
#[derive(Debug, Clone)]
pub struct ScalarKalman {
    q: f64,
    r: f64,
    estimate: Option<f64>,
    covariance: f64,
}

impl ScalarKalman {
    pub fn new(q: f64, r: f64) -> Result<Self, TelemetryError> {
        if !(q >= 0.0 && r >= 0.0) || !q.is_finite() || !r.is_finite() {
            return Err(TelemetryError::Config(format!(
                "variances must be finite and non-negative (q = {q}, r = {r})"
            )));
        }
        Ok(ScalarKalman { q, r, estimate: None, covariance: r })
    }

    pub fn update(&mut self, z: f64) -> f64 {
        let Some(x) = self.estimate else {
            self.estimate = Some(z);
            self.covariance = self.r;
            return z;
        };
        let p = self.covariance + self.q;
        // r = 0 and q = 0 with p = 0 leaves gain undefined; treat the
        // measurement as exact.
        let gain = if p + self.r == 0.0 { 1.0 } else { p / (p + self.r) };
        let x = x + gain * (z - x);
        self.covariance = (1.0 - gain) * p;
        self.estimate = Some(x);
        x
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }
}

pub fn kalman_filter(series: &[f64], q: f64, r: f64) -> Result<Vec<f64>, TelemetryError> {
    if series.is_empty() {
        return Err(TelemetryError::InsufficientData { needed: 1, got: 0 });
    }
    let mut filter = ScalarKalman::new(q, r)?;
    Ok(series.iter().map(|&z| filter.update(z)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn zero_measurement_variance_is_identity() {
        let xs = [3.0, -1.0, 8.5, 2.25];
        for q in [0.0, 0.5, 10.0] {
            assert_eq!(kalman_filter(&xs, q, 0.0).unwrap(), xs.to_vec());
        }
    }

    #[test]
    fn hand_recursion_half_gain() {
        // P0 = r = 1; step: P = 1 + 0, K = 1/2, x = 0 + 0.5 * 2
        assert_eq!(kalman_filter(&[0.0, 2.0], 0.0, 1.0).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_input_is_fixed_point() {
        for (q, r) in [(0.0, 1.0), (0.01, 1.0), (3.0, 0.2)] {
            let out = kalman_filter(&[4.2; 20], q, r).unwrap();
            assert!(out.iter().all(|&v| v == 4.2));
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(kalman_filter(&[1.0], -1.0, 1.0), Err(TelemetryError::Config(_))));
        assert!(matches!(kalman_filter(&[1.0], 0.0, -0.1), Err(TelemetryError::Config(_))));
        assert!(kalman_filter(&[], 0.0, 1.0).is_err());
    }

    fn variance(xs: &[f64]) -> f64 {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn smoothing_never_increases_variance_without_process_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let len = rng.random_range(5..200);
            let sd = rng.random_range(0.1..20.0);
            let noise = Normal::new(70.0, sd).unwrap();
            let series: Vec<f64> = (0..len).map(|_| noise.sample(&mut rng)).collect();
            let r = rng.random_range(0.1..5.0);
            let out = kalman_filter(&series, 0.0, r).unwrap();
            assert!(variance(&out) <= variance(&series) + 1e-12);
        }
    }
}
