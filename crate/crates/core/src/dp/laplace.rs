use rand::Rng;

use super::DpError;

/// Inverse CDF of Laplace(0, b) at `u` in (0, 1).
pub fn laplace_from_uniform(u: f64, b: f64) -> f64 {
    let d = u - 0.5;
    if d == 0.0 {
        return 0.0;
    }
    -b * d.signum() * (1.0 - 2.0 * d.abs()).ln()
}

pub fn laplace_sample<R: Rng + ?Sized>(b: f64, rng: &mut R) -> Result<f64, DpError> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(DpError::Params(format!("Laplace scale must be positive, got {b}")));
    }
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    Ok(laplace_from_uniform(u, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn median_is_zero() {
        assert_eq!(laplace_from_uniform(0.5, 3.0), 0.0);
        assert!(laplace_from_uniform(0.75, 1.0) > 0.0);
        assert!((laplace_from_uniform(0.75, 1.0) + laplace_from_uniform(0.25, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_scale() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(laplace_sample(0.0, &mut rng).is_err());
        assert!(laplace_sample(-1.0, &mut rng).is_err());
        assert!(laplace_sample(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn moments_match() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let n = 1_000_000;
        let b = 2.0;
        let xs: Vec<f64> = (0..n).map(|_| laplace_sample(b, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((var - 8.0).abs() <= 0.4, "variance {var}");
    }

    #[test]
    fn seeded_sequence_repeats() {
        let draw = |seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..5).map(|_| laplace_sample(1.0, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }
}
