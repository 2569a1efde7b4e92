//! Online phase: openings, batched MAC checks, Beaver multiplication, inputs.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bus::{Message, MessageBus, Transcript};
use super::dealer::{BeaverTriple, Dealer, InputMask, MacKeyShare};
use super::share::{self, AuthShare};
use super::{MpcContext, MpcError};
use crate::arith::{add_mod, mul_mod, sub_mod};

/// Local state of one simulated party. Only this party's key and openings.
struct Party {
    index: usize,
    key: MacKeyShare,
    rng: ChaCha20Rng,
    /// Opened values awaiting the MAC check, with this party's MAC share.
    pending: Vec<(u64, u64)>,
}

pub struct Session {
    ctx: MpcContext,
    parties: Vec<Party>,
    bus: MessageBus,
    triples: VecDeque<BeaverTriple>,
    masks: Vec<VecDeque<InputMask>>,
    next_batch: u64,
}

fn commitment(label: &[u8], batch: u64, party: usize, data: &[u8], nonce: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(label);
    h.update(batch.to_le_bytes());
    h.update((party as u64).to_le_bytes());
    h.update(data);
    h.update(nonce);
    h.finalize().into()
}

fn read_u64(m: &Message) -> Result<u64, MpcError> {
    let bytes: [u8; 8] = m.payload[..].try_into().map_err(|_| MpcError::Protocol(format!("bad {} payload", m.kind)))?;
    Ok(u64::from_le_bytes(bytes))
}

impl Session {
    /// Pull `triples` Beaver triples and `masks_per_party` input masks per party
    /// from the dealer. The dealer is not consulted again.
    pub fn new(
        dealer: &mut Dealer,
        keys: Vec<MacKeyShare>,
        triples: usize,
        masks_per_party: usize,
        seed: u64,
    ) -> Result<Self, MpcError> {
        let ctx = dealer.context();
        if keys.len() != ctx.parties || keys.iter().enumerate().any(|(i, k)| k.party != i || k.ctx != ctx.id) {
            return Err(MpcError::ContextMismatch);
        }
        let parties = keys
            .into_iter()
            .map(|key| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(key.party as u64 + 1);
                Party { index: key.party, key, rng, pending: Vec::new() }
            })
            .collect();
        let masks = (0..ctx.parties).map(|i| (0..masks_per_party).map(|_| dealer.input_mask(i)).collect()).collect();
        Ok(Session {
            ctx,
            parties,
            bus: MessageBus::new(ctx.parties),
            triples: dealer.triples(triples).into(),
            masks,
            next_batch: 0,
        })
    }

    pub fn context(&self) -> MpcContext {
        self.ctx
    }

    pub fn transcript(&self) -> &Transcript {
        self.bus.transcript()
    }

    pub fn triples_left(&self) -> usize {
        self.triples.len()
    }

    pub fn masks_left(&self, party: usize) -> usize {
        self.masks.get(party).map_or(0, VecDeque::len)
    }

    fn check_sharing(&self, x: &[AuthShare]) -> Result<(), MpcError> {
        if x.len() != self.ctx.parties {
            return Err(MpcError::Protocol(format!("expected {} shares, got {}", self.ctx.parties, x.len())));
        }
        if x.iter().enumerate().any(|(i, s)| s.party != i || s.ctx != self.ctx.id) {
            return Err(MpcError::ContextMismatch);
        }
        Ok(())
    }

    pub fn add(&self, x: &[AuthShare], y: &[AuthShare]) -> Result<Vec<AuthShare>, MpcError> {
        self.check_sharing(x)?;
        x.iter().zip(y).map(|(a, b)| share::add_shares(&self.ctx, a, b)).collect()
    }

    pub fn sub(&self, x: &[AuthShare], y: &[AuthShare]) -> Result<Vec<AuthShare>, MpcError> {
        self.check_sharing(x)?;
        x.iter().zip(y).map(|(a, b)| share::sub_shares(&self.ctx, a, b)).collect()
    }

    pub fn scale(&self, x: &[AuthShare], c: u64) -> Vec<AuthShare> {
        x.iter().map(|a| share::scale_share(&self.ctx, a, c)).collect()
    }

    pub fn add_public(&self, x: &[AuthShare], c: u64) -> Result<Vec<AuthShare>, MpcError> {
        self.check_sharing(x)?;
        x.iter().zip(&self.parties).map(|(a, p)| share::add_public(&self.ctx, a, c, &p.key)).collect()
    }

    /// Broadcast value shares and reconstruct. The result is unverified until
    /// the next [`Session::check`].
    pub fn open(&mut self, x: &[AuthShare]) -> Result<u64, MpcError> {
        self.check_sharing(x)?;
        let p = self.ctx.modulus;
        self.bus.next_round();
        for s in x {
            self.bus.broadcast(s.party, "open", &s.value.to_le_bytes());
        }
        let mut opened = None;
        for party in &mut self.parties {
            let own = x[party.index];
            let mut sum = own.value;
            for m in self.bus.receive(party.index) {
                sum = add_mod(sum, read_u64(&m)?, p);
            }
            party.pending.push((sum, own.mac));
            opened = Some(sum);
        }
        Ok(opened.expect("at least two parties"))
    }

    /// Batched MAC check over every opening since the last check.
    ///
    /// Parties first agree on a joint random seed (commit, then reveal), derive
    /// coefficients `r_j`, and then commit to and reveal
    /// `sigma_i = sum_j r_j (m_ij - alpha_i x_j)`. The batch passes iff the
    /// revealed sigmas sum to zero.
    pub fn check(&mut self) -> Result<(), MpcError> {
        let batch = self.next_batch;
        self.next_batch += 1;
        let pending: Vec<Vec<(u64, u64)>> = self.parties.iter_mut().map(|p| std::mem::take(&mut p.pending)).collect();
        if pending[0].is_empty() {
            return Ok(());
        }
        let p = self.ctx.modulus;
        let n = self.ctx.parties;

        let mut seeds = vec![[0u8; 32]; n];
        self.commit_round(b"coin", batch, |party| {
            party.rng.fill_bytes(&mut seeds[party.index]);
            seeds[party.index].to_vec()
        })?;
        let mut h = Sha256::new();
        h.update(b"coin-seed");
        h.update(batch.to_le_bytes());
        for s in &seeds {
            h.update(s);
        }
        let mut coins = ChaCha20Rng::from_seed(h.finalize().into());
        let coeffs: Vec<u64> = (0..pending[0].len()).map(|_| coins.random_range(0..p)).collect();

        let mut sigmas = vec![0u64; n];
        self.commit_round(b"sigma", batch, |party| {
            let alpha = party.key.alpha;
            let sigma = pending[party.index].iter().zip(&coeffs).fold(0, |acc, (&(x, mac), &r)| {
                add_mod(acc, mul_mod(r, sub_mod(mac, mul_mod(alpha, x, p), p), p), p)
            });
            sigmas[party.index] = sigma;
            sigma.to_le_bytes().to_vec()
        })?;
        if sigmas.iter().fold(0, |acc, &s| add_mod(acc, s, p)) != 0 {
            return Err(MpcError::MacCheckFailed { batch });
        }
        Ok(())
    }

    /// Two rounds: every party broadcasts a commitment to `value(party)`, then
    /// the opening. Each party verifies every commitment it received.
    fn commit_round<F>(&mut self, label: &[u8], batch: u64, mut value: F) -> Result<(), MpcError>
    where
        F: FnMut(&mut Party) -> Vec<u8>,
    {
        let n = self.ctx.parties;
        let mut openings = Vec::with_capacity(n);
        self.bus.next_round();
        for party in &mut self.parties {
            let data = value(party);
            let mut nonce = [0u8; 32];
            party.rng.fill_bytes(&mut nonce);
            let c = commitment(label, batch, party.index, &data, &nonce);
            self.bus.broadcast(party.index, "commit", &c);
            openings.push((data, nonce));
        }
        let received: Vec<Vec<Message>> = (0..n).map(|i| self.bus.receive(i)).collect();

        self.bus.next_round();
        for (i, (data, nonce)) in openings.iter().enumerate() {
            let mut payload = data.clone();
            payload.extend_from_slice(nonce);
            self.bus.broadcast(i, "reveal", &payload);
        }
        for (i, commits) in received.iter().enumerate() {
            for reveal in self.bus.receive(i) {
                let sender = reveal.from;
                let committed = commits.iter().find(|m| m.from == sender);
                let (data, nonce) = reveal.payload.split_at(reveal.payload.len().saturating_sub(32));
                let ok = committed.is_some_and(|m| m.payload == commitment(label, batch, sender, data, nonce));
                if !ok {
                    return Err(MpcError::CommitmentMismatch { party: sender, batch });
                }
            }
        }
        Ok(())
    }

    pub fn open_and_check(&mut self, x: &[AuthShare]) -> Result<u64, MpcError> {
        let v = self.open(x)?;
        self.check()?;
        Ok(v)
    }

    /// Secret-share `value` held by `owner` using a preprocessed mask.
    pub fn input(&mut self, owner: usize, value: u64) -> Result<Vec<AuthShare>, MpcError> {
        let p = self.ctx.modulus;
        if value >= p {
            return Err(MpcError::Range { value, modulus: p });
        }
        let queue = self.masks.get_mut(owner).ok_or_else(|| MpcError::Protocol(format!("no party {owner}")))?;
        let mask = queue.pop_front().ok_or(MpcError::OfflineExhausted { resource: "input mask" })?;
        self.bus.next_round();
        self.bus.broadcast(owner, "input", &sub_mod(value, mask.r, p).to_le_bytes());
        let mut eps = None;
        for i in 0..self.ctx.parties {
            if i == owner {
                continue;
            }
            let msgs = self.bus.receive(i);
            let m = msgs.first().ok_or_else(|| MpcError::Protocol("missing input broadcast".into()))?;
            eps = Some(read_u64(m)?);
        }
        let eps = eps.expect("at least two parties");
        self.add_public(&mask.shares, eps)
    }

    /// Beaver multiplication with an explicit triple.
    pub fn mul_with(
        &mut self,
        x: &[AuthShare],
        y: &[AuthShare],
        triple: &mut BeaverTriple,
    ) -> Result<Vec<AuthShare>, MpcError> {
        if triple.consumed {
            return Err(MpcError::TripleReused { id: triple.id });
        }
        self.check_sharing(&triple.a)?;
        triple.consumed = true;
        let eps_sh = self.sub(x, &triple.a)?;
        let delta_sh = self.sub(y, &triple.b)?;
        let eps = self.open(&eps_sh)?;
        let delta = self.open(&delta_sh)?;
        let p = self.ctx.modulus;
        let z = self.add(&triple.c, &self.scale(&triple.b, eps))?;
        let z = self.add(&z, &self.scale(&triple.a, delta))?;
        self.add_public(&z, mul_mod(eps, delta, p))
    }

    pub fn mul(&mut self, x: &[AuthShare], y: &[AuthShare]) -> Result<Vec<AuthShare>, MpcError> {
        let mut t = self.triples.pop_front().ok_or(MpcError::OfflineExhausted { resource: "Beaver triple" })?;
        self.mul_with(x, y, &mut t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateOp {
    /// Sum of every input from every party.
    Sum,
    /// Same computation as `Sum`; the divisor (input count) is public.
    MeanNumerator,
    /// Inner product of the two non-empty input vectors.
    Dot,
}

/// Share every party's inputs, evaluate `op` and open the result with a MAC check.
pub fn secure_aggregate(session: &mut Session, inputs: &[Vec<u64>], op: AggregateOp) -> Result<u64, MpcError> {
    let ctx = session.context();
    if inputs.len() != ctx.parties {
        return Err(MpcError::Protocol(format!("expected inputs from {} parties, got {}", ctx.parties, inputs.len())));
    }
    for (i, v) in inputs.iter().enumerate() {
        if v.len() > session.masks_left(i) {
            return Err(MpcError::OfflineExhausted { resource: "input mask" });
        }
    }
    let result = match op {
        AggregateOp::Sum | AggregateOp::MeanNumerator => {
            let mut acc: Option<Vec<AuthShare>> = None;
            for (owner, values) in inputs.iter().enumerate() {
                for &v in values {
                    let s = session.input(owner, v)?;
                    acc = Some(match acc {
                        Some(a) => session.add(&a, &s)?,
                        None => s,
                    });
                }
            }
            match acc {
                Some(a) => a,
                None => return Ok(0),
            }
        }
        AggregateOp::Dot => {
            let owners: Vec<usize> = (0..inputs.len()).filter(|&i| !inputs[i].is_empty()).collect();
            let [a, b] = owners[..] else {
                return Err(MpcError::Protocol("dot product needs exactly two non-empty input vectors".into()));
            };
            if inputs[a].len() != inputs[b].len() {
                return Err(MpcError::Protocol("dot product inputs differ in length".into()));
            }
            if session.triples_left() < inputs[a].len() {
                return Err(MpcError::OfflineExhausted { resource: "Beaver triple" });
            }
            let mut acc: Option<Vec<AuthShare>> = None;
            for (&x, &y) in inputs[a].iter().zip(&inputs[b]) {
                let xs = session.input(a, x)?;
                let ys = session.input(b, y)?;
                let prod = session.mul(&xs, &ys)?;
                acc = Some(match acc {
                    Some(acc) => session.add(&acc, &prod)?,
                    None => prod,
                });
            }
            acc.expect("non-empty vectors")
        }
    };
    session.open_and_check(&result)
}
