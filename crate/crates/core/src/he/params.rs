use std::fmt;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ntt::NttTable;
use super::HeError;
use crate::arith::{self, center, gcd, inv_mod_prime, is_prime};

/// Upper bound on chain primes so that sums of two residues fit in a word.
pub const MAX_CHAIN_PRIME_BITS: u32 = 62;
pub const DEFAULT_ERROR_STD: f64 = 3.2;

/// BGV parameter set. `modulus_chain[0]` is the bottom prime `q_0`; a
/// ciphertext at level `l` lives modulo `q_0 * ... * q_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeParams {
    pub ring_degree: usize,
    pub plaintext_modulus: u64,
    pub modulus_chain: Vec<u64>,
    pub error_std: f64,
}

/// Named parameter presets. None of these are sized for real security.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// N = 16, t = 97, three ~61-bit primes.
    Toy,
    /// N = 16 with a ~2^30 plaintext modulus, wide enough for fixed-point vitals.
    ToyWide,
    /// N = 4096 for throughput measurements.
    DemoLarge,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Toy, Preset::ToyWide, Preset::DemoLarge];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy => "toy",
            Preset::ToyWide => "toy-wide",
            Preset::DemoLarge => "demo-large",
        }
    }

    pub fn from_name(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn params(self) -> HeParams {
        match self {
            Preset::Toy => HeParams::with_generated_chain(16, 97, 3),
            Preset::ToyWide => {
                let t = arith::prime_congruent_one_above(1 << 30, 32);
                HeParams::with_generated_chain(16, t, 3)
            }
            Preset::DemoLarge => {
                let t = arith::prime_congruent_one_above(1 << 30, 8192);
                HeParams::with_generated_chain(4096, t, 3)
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl HeParams {
    /// Default desk parameters (N = 16, t = 97, three chain primes).
    pub fn toy() -> Self {
        Preset::Toy.params()
    }

    /// Generate `count` chain primes just below 2^61 with `q = 1 (mod 2N*t)`.
    ///
    /// The extra congruence modulo `t` keeps modulus switching from scaling the
    /// plaintext, so no correction factor (and its noise growth) is needed.
    pub fn with_generated_chain(ring_degree: usize, plaintext_modulus: u64, count: usize) -> Self {
        let step = 2 * ring_degree as u64 * plaintext_modulus;
        let mut chain = arith::primes_congruent_one_below(1 << 61, step, count);
        chain.reverse();
        HeParams { ring_degree, plaintext_modulus, modulus_chain: chain, error_std: DEFAULT_ERROR_STD }
    }

    pub fn levels(&self) -> usize {
        self.modulus_chain.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<(), HeError> {
        let n = self.ring_degree;
        if n < 2 || !n.is_power_of_two() {
            return Err(HeError::Params(format!("ring degree {n} is not a power of two >= 2")));
        }
        let two_n = 2 * n as u64;
        let t = self.plaintext_modulus;
        if !is_prime(t) {
            return Err(HeError::Params(format!("plaintext modulus t = {t} is not prime")));
        }
        if t % two_n != 1 {
            return Err(HeError::Params(format!(
                "plaintext modulus violates t = 1 (mod 2N): {t} mod {two_n} = {}",
                t % two_n
            )));
        }
        if self.modulus_chain.is_empty() {
            return Err(HeError::Params("modulus chain is empty".into()));
        }
        for (i, &q) in self.modulus_chain.iter().enumerate() {
            if q >= 1 << MAX_CHAIN_PRIME_BITS || !is_prime(q) {
                return Err(HeError::Params(format!(
                    "chain modulus q_{i} = {q} is not a prime below 2^{MAX_CHAIN_PRIME_BITS}"
                )));
            }
            if q % two_n != 1 {
                return Err(HeError::Params(format!(
                    "chain modulus violates q_{i} = 1 (mod 2N): {q} mod {two_n} = {}",
                    q % two_n
                )));
            }
            if gcd(q, t) != 1 {
                return Err(HeError::Params(format!("gcd(t, q_{i}) != 1")));
            }
            if self.modulus_chain[..i].contains(&q) {
                return Err(HeError::Params(format!("chain modulus q_{i} = {q} repeats")));
            }
        }
        if !(self.error_std > 0.0 && self.error_std.is_finite()) {
            return Err(HeError::Params(format!("error std {} must be positive", self.error_std)));
        }
        Ok(())
    }

    /// Canonical byte encoding used for the params hash.
    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.ring_degree as u64).to_le_bytes());
        out.extend_from_slice(&self.plaintext_modulus.to_le_bytes());
        out.extend_from_slice(&(self.modulus_chain.len() as u32).to_le_bytes());
        for q in &self.modulus_chain {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.extend_from_slice(&self.error_std.to_bits().to_le_bytes());
        out
    }

    /// First 8 bytes of SHA-256 over the canonical parameter encoding.
    pub fn hash(&self) -> [u8; 8] {
        let digest = Sha256::digest(self.canonical_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }

    pub fn modulus_bits(&self) -> f64 {
        self.modulus_chain.iter().map(|&q| (q as f64).log2()).sum()
    }
}

/// Validated parameters plus precomputed tables.
#[derive(Debug)]
pub struct HeContext {
    pub(crate) params: HeParams,
    pub(crate) ntt: Vec<NttTable>,
    pub(crate) plain_ntt: NttTable,
    /// `Q_l` for each level.
    pub(crate) level_modulus: Vec<BigUint>,
    /// CRT basis per level: element `i` is 1 mod `q_i` and 0 mod the others.
    pub(crate) crt_basis: Vec<Vec<BigUint>>,
    /// `q_l^{-1} mod q_i` indexed `[l][i]` for `i < l`.
    pub(crate) q_inv: Vec<Vec<u64>>,
    /// `t^{-1} mod q_i`.
    pub(crate) t_inv: Vec<u64>,
    /// `q_l mod t` as a centered integer; multiplies the result of switching
    /// away from level `l` so the plaintext keeps its scale.
    pub(crate) switch_correction: Vec<i64>,
}

impl HeContext {
    pub fn new(params: HeParams) -> Result<Self, HeError> {
        params.validate()?;
        let n = params.ring_degree;
        let t = params.plaintext_modulus;
        let ntt = params
            .modulus_chain
            .iter()
            .map(|&q| NttTable::new(q, n).ok_or_else(|| HeError::Params(format!("no 2N-th root modulo {q}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let plain_ntt =
            NttTable::new(t, n).ok_or_else(|| HeError::Params(format!("no 2N-th root modulo t = {t}")))?;

        let chain = &params.modulus_chain;
        let mut level_modulus = Vec::with_capacity(chain.len());
        let mut crt_basis = Vec::with_capacity(chain.len());
        for l in 0..chain.len() {
            let big_q: BigUint = chain[..=l].iter().map(|&q| BigUint::from(q)).product();
            let basis = chain[..=l]
                .iter()
                .map(|&qi| {
                    let hat = &big_q / qi;
                    let hat_mod = (&hat % qi).iter_u64_digits().next().unwrap_or(0);
                    let inv = inv_mod_prime(hat_mod, qi).expect("distinct primes are coprime");
                    (hat * inv) % &big_q
                })
                .collect();
            level_modulus.push(big_q);
            crt_basis.push(basis);
        }
        let q_inv = (0..chain.len())
            .map(|l| {
                (0..l)
                    .map(|i| inv_mod_prime(chain[l] % chain[i], chain[i]).expect("distinct primes"))
                    .collect()
            })
            .collect();
        let t_inv = chain
            .iter()
            .map(|&q| inv_mod_prime(t % q, q).expect("gcd(t, q) = 1"))
            .collect();
        let switch_correction = chain.iter().map(|&q| center(q % t, t)).collect();
        Ok(HeContext { params, ntt, plain_ntt, level_modulus, crt_basis, q_inv, t_inv, switch_correction })
    }

    pub fn params(&self) -> &HeParams {
        &self.params
    }

    pub fn degree(&self) -> usize {
        self.params.ring_degree
    }

    pub fn plaintext_modulus(&self) -> u64 {
        self.params.plaintext_modulus
    }

    pub fn top_level(&self) -> usize {
        self.params.levels()
    }

    pub fn modulus(&self, index: usize) -> u64 {
        self.params.modulus_chain[index]
    }

    pub fn level_modulus_bits(&self, level: usize) -> f64 {
        self.params.modulus_chain[..=level].iter().map(|&q| (q as f64).log2()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in Preset::ALL {
            let params = p.params();
            params.validate().unwrap();
            assert_eq!(params.modulus_chain.len(), 3);
            assert!(params.modulus_chain.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(Preset::from_name(p.name()), Some(p));
        }
        let toy = HeParams::toy();
        assert_eq!((toy.ring_degree, toy.plaintext_modulus, toy.error_std), (16, 97, 3.2));
        assert!(toy.modulus_chain.iter().all(|&q| q > 1 << 60));
    }

    #[test]
    fn rejects_t_not_one_mod_2n() {
        let mut p = HeParams::toy();
        p.plaintext_modulus = 96;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("prime") || err.contains("mod 2N"), "{err}");
        p.plaintext_modulus = 101; // prime, 101 mod 32 = 5
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("t = 1 (mod 2N)"), "{err}");
    }

    #[test]
    fn exhaustive_plaintext_modulus_sweep() {
        let base = HeParams::toy();
        for t in 2..=200u64 {
            let mut p = base.clone();
            p.plaintext_modulus = t;
            let ok = p.validate().is_ok();
            if t % 32 != 1 {
                assert!(!ok, "t = {t} must be rejected");
            } else {
                assert_eq!(ok, is_prime(t), "t = {t}");
            }
        }
    }

    #[test]
    fn rejects_bad_chain() {
        let mut p = HeParams::toy();
        p.modulus_chain[1] = p.modulus_chain[0];
        assert!(p.validate().is_err());
        let mut p = HeParams::toy();
        p.modulus_chain[0] = 1_000_003;
        assert!(p.validate().unwrap_err().to_string().contains("q_0"));
    }

    #[test]
    fn crt_basis_is_idempotent_selector() {
        let ctx = HeContext::new(HeParams::toy()).unwrap();
        for l in 0..=ctx.top_level() {
            for (i, b) in ctx.crt_basis[l].iter().enumerate() {
                for j in 0..=l {
                    let q = ctx.modulus(j);
                    let r = (b % q).iter_u64_digits().next().unwrap_or(0);
                    assert_eq!(r, u64::from(i == j));
                }
            }
        }
    }
}
