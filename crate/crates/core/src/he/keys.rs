use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::params::HeContext;
use super::poly::{sample_gaussian, sample_ternary, RnsPoly};
use crate::arith::pow_mod;

/// Digit width of the relinearization gadget.
pub const RELIN_DIGIT_BITS: u32 = 16;

/// Ternary secret `s`, with `s` and `s^2` cached at the top level.
#[derive(Clone)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    pub(crate) s: RnsPoly,
    pub(crate) s2: RnsPoly,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

impl SecretKey {
    pub(crate) fn from_coeffs(ctx: &HeContext, coeffs: Vec<i64>) -> Self {
        let s = RnsPoly::from_signed(ctx, &coeffs, ctx.top_level());
        let s2 = s.mul(&s, ctx);
        SecretKey { coeffs, s, s2 }
    }

    pub fn coefficients(&self) -> &[i64] {
        &self.coeffs
    }
}

/// RLWE encryption of zero: `p0 + p1 * s = t * e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub(crate) p0: RnsPoly,
    pub(crate) p1: RnsPoly,
}

/// One gadget entry: encrypts `2^(16k) * s^2` in the CRT slot of prime `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct RelinEntry {
    pub prime: usize,
    pub digit: u32,
    pub k0: RnsPoly,
    pub k1: RnsPoly,
}

/// Key-switching material from `s^2` to `s`, base-2^16 digits per chain prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelinKey {
    pub(crate) entries: Vec<RelinEntry>,
}

impl RelinKey {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct KeySet {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub relin: RelinKey,
}

pub(crate) fn digits_for(q: u64) -> u32 {
    (64 - q.leading_zeros()).div_ceil(RELIN_DIGIT_BITS)
}

impl HeContext {
    /// Deterministic key generation from a 64-bit seed.
    pub fn keygen(&self, seed: u64) -> KeySet {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = self.degree();
        let top = self.top_level();
        let sigma = self.params.error_std;
        let t = self.plaintext_modulus() as i64;

        let secret = SecretKey::from_coeffs(self, sample_ternary(n, &mut rng));

        let rlwe_zero = |rng: &mut ChaCha20Rng| {
            let a = RnsPoly::uniform(self, top, rng);
            let e: Vec<i64> = sample_gaussian(n, sigma, rng).into_iter().map(|x| x * t).collect();
            let te = RnsPoly::from_signed(self, &e, top);
            let b = te.sub(&a.mul(&secret.s, self), self);
            (b, a)
        };

        let (p0, p1) = rlwe_zero(&mut rng);
        let public = PublicKey { p0, p1 };

        let mut entries = Vec::new();
        for j in 0..=top {
            let qj = self.modulus(j);
            for digit in 0..digits_for(qj) {
                let (mut k0, k1) = rlwe_zero(&mut rng);
                let factor = pow_mod(2, (RELIN_DIGIT_BITS * digit) as u64, qj);
                for (x, s2) in k0.residues[j].iter_mut().zip(&secret.s2.residues[j]) {
                    *x = crate::arith::add_mod(*x, crate::arith::mul_mod(*s2, factor, qj), qj);
                }
                entries.push(RelinEntry { prime: j, digit, k0, k1 });
            }
        }
        KeySet { secret, public, relin: RelinKey { entries } }
    }
}
