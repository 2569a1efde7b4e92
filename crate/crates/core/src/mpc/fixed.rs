//! Fixed-point embedding of real values into the field.
//!
//! `x` maps to `round(x * 1000)` reduced mod p; negatives wrap to the top
//! half of the field. Values must satisfy `|x * 1000| < p / 2`. A product of
//! two encoded values carries scale 10^6.

use super::MpcError;
use crate::arith::{center, reduce_i64};

pub const FIXED_POINT_SCALE: f64 = 1000.0;

pub fn encode_fixed(x: f64, p: u64) -> Result<u64, MpcError> {
    let scaled = (x * FIXED_POINT_SCALE).round();
    let half = (p / 2) as f64;
    if !scaled.is_finite() || scaled.abs() >= half || scaled.abs() >= i64::MAX as f64 {
        return Err(MpcError::FixedPointRange(x));
    }
    Ok(reduce_i64(scaled as i64, p))
}

/// Inverse of [`encode_fixed`] for a value carrying `scale_power` factors of 1000.
pub fn decode_fixed(v: u64, p: u64, scale_power: i32) -> f64 {
    center(v % p, p) as f64 / FIXED_POINT_SCALE.powi(scale_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::DEFAULT_MODULUS;

    #[test]
    fn roundtrip() {
        for x in [0.0, 72.5, -3.25, 98.6, 1e9] {
            let v = encode_fixed(x, DEFAULT_MODULUS).unwrap();
            assert_eq!(decode_fixed(v, DEFAULT_MODULUS, 1), x);
        }
        assert_eq!(encode_fixed(0.0004, DEFAULT_MODULUS).unwrap(), 0);
    }

    #[test]
    fn range_checked() {
        assert!(encode_fixed(1e18, DEFAULT_MODULUS).is_err());
        assert!(encode_fixed(f64::NAN, DEFAULT_MODULUS).is_err());
        assert!(encode_fixed(0.015, 31).is_err());
        assert_eq!(encode_fixed(-0.014, 31).unwrap(), 17);
    }
}
