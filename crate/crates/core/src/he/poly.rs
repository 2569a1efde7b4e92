//! Ring elements in residue (RNS) form, coefficient representation.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::params::HeContext;
use crate::arith::{add_mod, reduce_i64, sub_mod};

/// One residue vector per chain prime `q_0..=q_level`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RnsPoly {
    pub(crate) residues: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn zero(ctx: &HeContext, level: usize) -> Self {
        RnsPoly { residues: vec![vec![0; ctx.degree()]; level + 1] }
    }

    /// Lift a polynomial with small signed coefficients to every prime up to `level`.
    pub fn from_signed(ctx: &HeContext, coeffs: &[i64], level: usize) -> Self {
        let residues = (0..=level)
            .map(|i| {
                let q = ctx.modulus(i);
                coeffs.iter().map(|&c| reduce_i64(c, q)).collect()
            })
            .collect();
        RnsPoly { residues }
    }

    pub fn uniform<R: Rng + ?Sized>(ctx: &HeContext, level: usize, rng: &mut R) -> Self {
        let residues = (0..=level)
            .map(|i| {
                let q = ctx.modulus(i);
                (0..ctx.degree()).map(|_| rng.random_range(0..q)).collect()
            })
            .collect();
        RnsPoly { residues }
    }

    pub fn add(&self, other: &Self, ctx: &HeContext) -> Self {
        self.zip_with(other, ctx, add_mod)
    }

    pub fn sub(&self, other: &Self, ctx: &HeContext) -> Self {
        self.zip_with(other, ctx, sub_mod)
    }

    pub fn mul(&self, other: &Self, ctx: &HeContext) -> Self {
        let residues = self
            .residues
            .iter()
            .zip(&other.residues)
            .enumerate()
            .map(|(i, (a, b))| ctx.ntt[i].multiply(a, b))
            .collect();
        RnsPoly { residues }
    }

    /// Keep only the residues for primes `0..=level`.
    pub fn truncated(&self, level: usize) -> Self {
        RnsPoly { residues: self.residues[..=level].to_vec() }
    }

    fn zip_with(&self, other: &Self, ctx: &HeContext, f: fn(u64, u64, u64) -> u64) -> Self {
        debug_assert_eq!(self.residues.len(), other.residues.len());
        let residues = self
            .residues
            .iter()
            .zip(&other.residues)
            .enumerate()
            .map(|(i, (a, b))| {
                let q = ctx.modulus(i);
                a.iter().zip(b).map(|(&x, &y)| f(x, y, q)).collect()
            })
            .collect();
        RnsPoly { residues }
    }
}

pub fn sample_ternary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

/// Discrete Gaussian approximated by rounding, tails cut at 6 sigma.
pub fn sample_gaussian<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> Vec<i64> {
    let normal = Normal::new(0.0, sigma).expect("sigma validated positive");
    let bound = (6.0 * sigma).ceil();
    (0..n)
        .map(|_| {
            let x: f64 = normal.sample(rng);
            x.clamp(-bound, bound).round() as i64
        })
        .collect()
}
