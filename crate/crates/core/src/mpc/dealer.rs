//! Trusted-dealer offline phase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::share::AuthShare;
use super::{MpcContext, MpcError};
use crate::arith::{add_mod, is_prime, mul_mod, sub_mod};

/// A party's share `alpha_i` of the global MAC key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacKeyShare {
    pub ctx: u64,
    pub party: usize,
    pub(crate) alpha: u64,
}

impl MacKeyShare {
    pub fn value(&self) -> u64 {
        self.alpha
    }
}

/// Authenticated sharings of `a`, `b` and `c = a*b`. One-time use.
#[derive(Debug, Clone)]
pub struct BeaverTriple {
    pub id: u64,
    pub a: Vec<AuthShare>,
    pub b: Vec<AuthShare>,
    pub c: Vec<AuthShare>,
    pub(crate) consumed: bool,
}

impl BeaverTriple {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

/// Sharing of a random `r` whose clear value is known to `owner` only.
#[derive(Debug, Clone)]
pub struct InputMask {
    pub owner: usize,
    pub(crate) r: u64,
    pub shares: Vec<AuthShare>,
}

pub struct Dealer {
    ctx: MpcContext,
    alpha: u64,
    rng: ChaCha20Rng,
    next_triple: u64,
}

/// Create the context, the dealer and one MAC key share per party.
pub fn dealer_setup(n: usize, p: u64, seed: u64) -> Result<(Dealer, Vec<MacKeyShare>), MpcError> {
    if n < 2 {
        return Err(MpcError::Params(format!("need at least 2 parties, got {n}")));
    }
    if p >= 1 << 62 || !is_prime(p) {
        return Err(MpcError::Params(format!("field modulus {p} is not a prime below 2^62")));
    }
    let mut h = Sha256::new();
    h.update(b"mpc-context");
    h.update(seed.to_le_bytes());
    h.update((n as u64).to_le_bytes());
    h.update(p.to_le_bytes());
    let id = u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"));
    let ctx = MpcContext { id, parties: n, modulus: p };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let alphas: Vec<u64> = (0..n).map(|_| rng.random_range(0..p)).collect();
    let alpha = alphas.iter().fold(0, |acc, &a| add_mod(acc, a, p));
    let keys = alphas.into_iter().enumerate().map(|(party, alpha)| MacKeyShare { ctx: id, party, alpha }).collect();
    Ok((Dealer { ctx, alpha, rng, next_triple: 0 }, keys))
}

fn split<R: Rng + ?Sized>(x: u64, n: usize, p: u64, rng: &mut R) -> Vec<u64> {
    let mut parts: Vec<u64> = (0..n - 1).map(|_| rng.random_range(0..p)).collect();
    let sum = parts.iter().fold(0, |acc, &v| add_mod(acc, v, p));
    parts.push(sub_mod(x, sum, p));
    parts
}

fn deal<R: Rng + ?Sized>(ctx: &MpcContext, alpha: u64, x: u64, rng: &mut R) -> Result<Vec<AuthShare>, MpcError> {
    let p = ctx.modulus;
    if x >= p {
        return Err(MpcError::Range { value: x, modulus: p });
    }
    let values = split(x, ctx.parties, p, rng);
    let macs = split(mul_mod(alpha, x, p), ctx.parties, p, rng);
    Ok(values
        .into_iter()
        .zip(macs)
        .enumerate()
        .map(|(party, (value, mac))| AuthShare { ctx: ctx.id, party, value, mac })
        .collect())
}

impl Dealer {
    pub fn context(&self) -> MpcContext {
        self.ctx
    }

    /// The global MAC key as recorded at setup. Never sent to any party.
    pub fn recorded_alpha(&self) -> u64 {
        self.alpha
    }

    /// Authenticated additive sharing of `x`.
    pub fn share_input<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> Result<Vec<AuthShare>, MpcError> {
        deal(&self.ctx, self.alpha, x, rng)
    }

    fn share_own(&mut self, x: u64) -> Vec<AuthShare> {
        deal(&self.ctx, self.alpha, x, &mut self.rng).expect("value reduced mod p")
    }

    pub fn triple(&mut self) -> BeaverTriple {
        let p = self.ctx.modulus;
        let a = self.rng.random_range(0..p);
        let b = self.rng.random_range(0..p);
        let id = self.next_triple;
        self.next_triple += 1;
        BeaverTriple {
            id,
            a: self.share_own(a),
            b: self.share_own(b),
            c: self.share_own(mul_mod(a, b, p)),
            consumed: false,
        }
    }

    pub fn triples(&mut self, count: usize) -> Vec<BeaverTriple> {
        (0..count).map(|_| self.triple()).collect()
    }

    pub fn input_mask(&mut self, owner: usize) -> InputMask {
        let r = self.rng.random_range(0..self.ctx.modulus);
        InputMask { owner, r, shares: self.share_own(r) }
    }
}
