//! Encryption, decryption and homomorphic evaluation.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use super::encoding::Plaintext;
use super::keys::{digits_for, PublicKey, RelinKey, SecretKey, RELIN_DIGIT_BITS};
use super::params::HeContext;
use super::poly::{sample_gaussian, sample_ternary, RnsPoly};
use super::HeError;
use crate::arith::{center, mul_mod, reduce_i128, sub_mod};

/// Decryption refuses results with less headroom than this many bits: a
/// wrapped-around phase looks uniform and lands within a fraction of a bit
/// of `log2(q) - 1`.
pub const MIN_DECRYPT_BUDGET_BITS: f64 = 1.0;

/// Ciphertext: two ring elements (three before relinearization) at a level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub(crate) parts: Vec<RnsPoly>,
    pub(crate) level: usize,
}

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    /// Number of ring elements minus one (1 for fresh/relinearized, 2 after a raw tensor).
    pub fn degree(&self) -> usize {
        self.parts.len() - 1
    }

    /// Raw residue access for diagnostics and tamper tests.
    pub fn residue_mut(&mut self, part: usize, prime: usize) -> &mut [u64] {
        &mut self.parts[part].residues[prime]
    }
}

/// Explicit encryption randomness, for reproducible diagnostics.
#[derive(Debug, Clone)]
pub struct EncryptionNoise {
    pub u: Vec<i64>,
    pub e0: Vec<i64>,
    pub e1: Vec<i64>,
}

impl EncryptionNoise {
    pub fn zero(n: usize) -> Self {
        EncryptionNoise { u: vec![0; n], e0: vec![0; n], e1: vec![0; n] }
    }

    pub fn sample<R: Rng + ?Sized>(ctx: &HeContext, rng: &mut R) -> Self {
        let n = ctx.degree();
        let sigma = ctx.params.error_std;
        EncryptionNoise {
            u: sample_ternary(n, rng),
            e0: sample_gaussian(n, sigma, rng),
            e1: sample_gaussian(n, sigma, rng),
        }
    }
}

impl HeContext {
    pub fn encrypt<R: Rng + ?Sized>(&self, pk: &PublicKey, pt: &Plaintext, rng: &mut R) -> Ciphertext {
        let noise = EncryptionNoise::sample(self, rng);
        self.encrypt_with_noise(pk, pt, &noise)
    }

    /// `(p0*u + t*e0 + m, p1*u + t*e1)` at the top level.
    pub fn encrypt_with_noise(&self, pk: &PublicKey, pt: &Plaintext, noise: &EncryptionNoise) -> Ciphertext {
        let top = self.top_level();
        let t = self.plaintext_modulus() as i64;
        let u = RnsPoly::from_signed(self, &noise.u, top);
        let m: Vec<i64> = pt.coeffs.iter().map(|&c| c as i64).collect();
        let c0_small: Vec<i64> = noise.e0.iter().zip(&m).map(|(e, m)| t * e + m).collect();
        let c1_small: Vec<i64> = noise.e1.iter().map(|e| t * e).collect();
        let c0 = pk.p0.mul(&u, self).add(&RnsPoly::from_signed(self, &c0_small, top), self);
        let c1 = pk.p1.mul(&u, self).add(&RnsPoly::from_signed(self, &c1_small, top), self);
        Ciphertext { parts: vec![c0, c1], level: top }
    }

    /// `c0 + c1*s (+ c2*s^2)` modulo `Q_level`, CRT-reconstructed and centered.
    /// Returns `(magnitude, is_negative)` per coefficient.
    fn phase(&self, sk: &SecretKey, ct: &Ciphertext) -> Vec<(BigUint, bool)> {
        let level = ct.level;
        let s = sk.s.truncated(level);
        let mut acc = ct.parts[0].clone();
        if ct.parts.len() > 1 {
            acc = acc.add(&ct.parts[1].mul(&s, self), self);
        }
        if ct.parts.len() > 2 {
            let s2 = sk.s2.truncated(level);
            acc = acc.add(&ct.parts[2].mul(&s2, self), self);
        }
        let big_q = &self.level_modulus[level];
        let half = big_q >> 1u32;
        let basis = &self.crt_basis[level];
        (0..self.degree())
            .map(|k| {
                let mut x = BigUint::zero();
                for (i, b) in basis.iter().enumerate() {
                    x += b * acc.residues[i][k];
                }
                x %= big_q;
                if x > half {
                    (big_q - x, true)
                } else {
                    (x, false)
                }
            })
            .collect()
    }

    /// Remaining noise headroom in bits: `log2(Q_level) - log2(2 * max(|v|_inf, 1))`
    /// where `v = c0 + c1*s` centered. Non-positive predicts decryption failure.
    pub fn noise_budget(&self, sk: &SecretKey, ct: &Ciphertext) -> f64 {
        let phase = self.phase(sk, ct);
        self.budget_of(&phase, ct.level)
    }

    fn budget_of(&self, phase: &[(BigUint, bool)], level: usize) -> f64 {
        let max = phase.iter().map(|(m, _)| m).max().cloned().unwrap_or_default();
        let norm = if max.is_zero() { 0.0 } else { big_log2(&max) };
        let norm = norm.max(0.0);
        self.level_modulus_bits(level) - (1.0 + norm)
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext, HeError> {
        let phase = self.phase(sk, ct);
        let budget = self.budget_of(&phase, ct.level);
        if budget < MIN_DECRYPT_BUDGET_BITS {
            return Err(HeError::NoiseExhausted { budget });
        }
        let t = self.plaintext_modulus();
        let coeffs = phase
            .into_iter()
            .map(|(mag, neg)| {
                let r = (mag % t).to_u64().unwrap_or(0);
                if neg && r != 0 {
                    t - r
                } else {
                    r
                }
            })
            .collect();
        Ok(Plaintext { coeffs })
    }

    /// Convenience: decrypt and decode to slot values.
    pub fn decrypt_slots(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<u64>, HeError> {
        Ok(self.decode(&self.decrypt(sk, ct)?))
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, HeError> {
        if a.level != b.level {
            return Err(HeError::LevelMismatch { left: a.level, right: b.level });
        }
        let len = a.parts.len().max(b.parts.len());
        let zero = RnsPoly::zero(self, a.level);
        let parts = (0..len)
            .map(|i| {
                let x = a.parts.get(i).unwrap_or(&zero);
                let y = b.parts.get(i).unwrap_or(&zero);
                x.add(y, self)
            })
            .collect();
        Ok(Ciphertext { parts, level: a.level })
    }

    /// Slot-wise product, relinearized and switched down one level.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext, HeError> {
        if a.level != b.level {
            return Err(HeError::LevelMismatch { left: a.level, right: b.level });
        }
        if a.level == 0 {
            return Err(HeError::DepthExhausted);
        }
        if a.degree() != 1 || b.degree() != 1 {
            return Err(HeError::Degree);
        }
        let c0 = a.parts[0].mul(&b.parts[0], self);
        let c1 = a.parts[0].mul(&b.parts[1], self).add(&a.parts[1].mul(&b.parts[0], self), self);
        let c2 = a.parts[1].mul(&b.parts[1], self);
        let tensor = Ciphertext { parts: vec![c0, c1, c2], level: a.level };
        let relin = self.relinearize(&tensor, rlk)?;
        self.mod_switch(&relin)
    }

    /// Fold the `s^2` component back into a degree-1 ciphertext.
    pub fn relinearize(&self, ct: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext, HeError> {
        if ct.degree() == 1 {
            return Ok(ct.clone());
        }
        if ct.degree() != 2 {
            return Err(HeError::Degree);
        }
        let level = ct.level;
        let n = self.degree();
        let mask = (1u64 << RELIN_DIGIT_BITS) - 1;
        let mut c0 = ct.parts[0].clone();
        let mut c1 = ct.parts[1].clone();
        let c2 = &ct.parts[2];
        for j in 0..=level {
            let expected = digits_for(self.modulus(j));
            for digit in 0..expected {
                let entry = rlk
                    .entries
                    .iter()
                    .find(|e| e.prime == j && e.digit == digit)
                    .ok_or(HeError::MissingRelinKey)?;
                let shift = RELIN_DIGIT_BITS * digit;
                let d: Vec<i64> = (0..n).map(|k| ((c2.residues[j][k] >> shift) & mask) as i64).collect();
                let d = RnsPoly::from_signed(self, &d, level);
                c0 = c0.add(&d.mul(&entry.k0.truncated(level), self), self);
                c1 = c1.add(&d.mul(&entry.k1.truncated(level), self), self);
            }
        }
        Ok(Ciphertext { parts: vec![c0, c1], level })
    }

    /// Drop the top prime of the current level, dividing the ciphertext by it
    /// while keeping the plaintext unchanged mod t.
    pub fn mod_switch(&self, ct: &Ciphertext) -> Result<Ciphertext, HeError> {
        let l = ct.level;
        if l == 0 {
            return Err(HeError::DepthExhausted);
        }
        let ql = self.modulus(l);
        let t = self.plaintext_modulus() as i128;
        let t_inv = self.t_inv[l];
        let correction = self.switch_correction[l];
        let parts = ct
            .parts
            .iter()
            .map(|p| {
                let top = &p.residues[l];
                // delta = t * [x * t^-1]_ql is = x (mod ql) and = 0 (mod t).
                let delta: Vec<i128> = top
                    .iter()
                    .map(|&x| t * center(mul_mod(x, t_inv, ql), ql) as i128)
                    .collect();
                let residues = (0..l)
                    .map(|i| {
                        let qi = self.modulus(i);
                        let inv = self.q_inv[l][i];
                        let fix = reduce_i128(correction as i128, qi);
                        p.residues[i]
                            .iter()
                            .zip(&delta)
                            .map(|(&x, &d)| {
                                let y = mul_mod(sub_mod(x, reduce_i128(d, qi), qi), inv, qi);
                                if correction == 1 {
                                    y
                                } else {
                                    mul_mod(y, fix, qi)
                                }
                            })
                            .collect()
                    })
                    .collect();
                RnsPoly { residues }
            })
            .collect();
        Ok(Ciphertext { parts, level: l - 1 })
    }

    pub fn mod_switch_to(&self, ct: &Ciphertext, level: usize) -> Result<Ciphertext, HeError> {
        if level > ct.level {
            return Err(HeError::LevelMismatch { left: ct.level, right: level });
        }
        let mut out = ct.clone();
        while out.level > level {
            out = self.mod_switch(&out)?;
        }
        Ok(out)
    }
}

fn big_log2(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().unwrap_or(1) as f64).log2();
    }
    let shift = bits - 53;
    let top = (x >> shift).to_u64().unwrap_or(1) as f64;
    top.log2() + shift as f64
}
