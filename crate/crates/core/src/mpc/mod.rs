//! SPDZ-style authenticated secret sharing.
//!
//! A trusted dealer hands out MAC key shares, Beaver triples and input masks
//! before the online phase starts. Parties are simulated as state machines that
//! talk only through a round-based in-process [`MessageBus`]; every opening is
//! later verified by a batched, commit-then-reveal MAC check.

mod bus;
mod dealer;
mod fixed;
mod session;
mod share;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bus::{MessageBus, Transcript, TranscriptRecord};
pub use dealer::{dealer_setup, BeaverTriple, Dealer, InputMask, MacKeyShare};
pub use fixed::{decode_fixed, encode_fixed, FIXED_POINT_SCALE};
pub use session::{secure_aggregate, AggregateOp, Session};
pub use share::{add_public, add_shares, reconstruct, scale_share, sub_shares, AuthShare};

/// Mersenne prime 2^61 - 1.
pub const DEFAULT_MODULUS: u64 = (1 << 61) - 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("parameter error: {0}")]
    Params(String),
    #[error("value {value} is outside the field [0, {modulus})")]
    Range { value: u64, modulus: u64 },
    #[error("shares belong to different contexts or parties")]
    ContextMismatch,
    #[error("one-time-use violation: Beaver triple {id} was already consumed")]
    TripleReused { id: u64 },
    #[error("offline phase exhausted: no {resource} left")]
    OfflineExhausted { resource: &'static str },
    #[error("MAC check failed for opening batch {batch}; protocol aborted")]
    MacCheckFailed { batch: u64 },
    #[error("commitment from party {party} did not open in batch {batch}; protocol aborted")]
    CommitmentMismatch { party: usize, batch: u64 },
    #[error("fixed-point value {0} does not fit in the field")]
    FixedPointRange(f64),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Public parameters shared by every party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcContext {
    pub id: u64,
    pub parties: usize,
    pub modulus: u64,
}
