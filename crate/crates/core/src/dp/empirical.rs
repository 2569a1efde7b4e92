//! Sampling estimate of a mechanism's privacy loss on one pair of neighbors.

use serde::{Deserialize, Serialize};

pub const DEFAULT_BUCKETS: usize = 10;
pub const MIN_TRIALS: usize = 10_000;
/// Allowance for sampling error when comparing the estimate against ε.
pub const EMPIRICAL_SLACK: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub epsilon: f64,
    pub trials: usize,
    pub buckets: usize,
    pub max_log_ratio: f64,
    /// `max_log_ratio > epsilon + EMPIRICAL_SLACK`.
    pub violated: bool,
    pub warning: Option<String>,
}

/// Run `mechanism` `trials` times on `d` and on `d_prime`, bucket the outputs
/// at pooled quantiles, and return the largest `|ln(freq_D / freq_D')|` with
/// add-one smoothing. `d` and `d_prime` should differ in exactly one record.
pub fn empirical_epsilon_check<R, M>(
    mut mechanism: M,
    d: &[f64],
    d_prime: &[f64],
    epsilon: f64,
    trials: usize,
    rng: &mut R,
) -> EmpiricalReport
where
    R: ?Sized,
    M: FnMut(&[f64], &mut R) -> f64,
{
    let warning = (trials < MIN_TRIALS)
        .then(|| format!("only {trials} trials; at least {MIN_TRIALS} are needed for a stable estimate"));
    let a: Vec<f64> = (0..trials).map(|_| mechanism(d, rng)).collect();
    let b: Vec<f64> = (0..trials).map(|_| mechanism(d_prime, rng)).collect();

    let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..DEFAULT_BUCKETS)
        .filter_map(|k| pooled.get(k * pooled.len() / DEFAULT_BUCKETS).copied())
        .collect();
    edges.dedup();
    let buckets = edges.len() + 1;
    let histogram = |xs: &[f64]| {
        let mut h = vec![0u64; buckets];
        for &x in xs {
            h[edges.partition_point(|&e| e <= x)] += 1;
        }
        h
    };
    let (ha, hb) = (histogram(&a), histogram(&b));
    let max_log_ratio = ha
        .iter()
        .zip(&hb)
        .map(|(&x, &y)| ((x as f64 + 1.0) / (y as f64 + 1.0)).ln().abs())
        .fold(0.0, f64::max);
    EmpiricalReport {
        epsilon,
        trials,
        buckets,
        max_log_ratio,
        violated: max_log_ratio > epsilon + EMPIRICAL_SLACK,
        warning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{laplace_sample, sensitivity, true_answer, Query};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn laplace_mech(q: Query, eps: f64) -> impl FnMut(&[f64], &mut ChaCha20Rng) -> f64 {
        let b = sensitivity(&q).unwrap() / eps;
        move |data, rng| true_answer(&q, data).unwrap()[0] + laplace_sample(b, rng).unwrap()
    }

    fn neighbors(n: usize, extra: f64) -> (Vec<f64>, Vec<f64>) {
        let d: Vec<f64> = (0..n).map(|i| 60.0 + (i % 100) as f64).collect();
        let mut d2 = d.clone();
        d2.push(extra);
        (d, d2)
    }

    #[test]
    fn count_within_epsilon() {
        let (d, d2) = neighbors(1000, 100.0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let r = empirical_epsilon_check(laplace_mech(Query::Count, 0.5), &d, &d2, 0.5, 100_000, &mut rng);
        assert!(!r.violated, "{r:?}");
        assert!(r.max_log_ratio <= 0.6);
        assert!(r.warning.is_none());
    }

    #[test]
    fn identical_datasets_near_zero() {
        let (d, _) = neighbors(1000, 0.0);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let r = empirical_epsilon_check(laplace_mech(Query::Count, 0.5), &d, &d, 0.5, 100_000, &mut rng);
        assert!(r.max_log_ratio <= 0.05, "{r:?}");
    }

    #[test]
    fn noiseless_mechanism_flagged() {
        let (d, d2) = neighbors(1000, 100.0);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let exact = |data: &[f64], _: &mut ChaCha20Rng| data.len() as f64;
        let r = empirical_epsilon_check(exact, &d, &d2, 0.5, 10_000, &mut rng);
        assert!(r.violated);
        assert!(r.max_log_ratio > 5.0);
    }

    #[test]
    fn few_trials_warn() {
        let (d, d2) = neighbors(10, 100.0);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let r = empirical_epsilon_check(laplace_mech(Query::Count, 1.0), &d, &d2, 1.0, 500, &mut rng);
        assert!(r.warning.is_some());
    }
}
