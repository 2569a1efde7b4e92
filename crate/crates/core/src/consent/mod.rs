//! User consent: sharing policies, the transfer-request approval flow, and
//! complete-subtree revocation with epoch-keyed data-key envelopes.

mod envelope;
mod policy;
mod revocation;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::LedgerError;

pub use envelope::{unwrap, CategoryGrant, KeyEnvelope, Wrap, ENVELOPE_MAGIC};
pub use policy::{evaluate, ConsentPolicy, ContextRule, Evaluation, StaticRule};
pub use revocation::{HolderKeys, RevocationTree};
pub use store::{ConsentStore, NewRequest, RequestState, TransferRequest, DEFAULT_REQUEST_TTL_MS};

#[derive(Debug, Error)]
pub enum ConsentError {
    #[error("no request with id {0}")]
    NotFound(String),
    #[error("actor {actor} may not decide requests of user {user}")]
    Unauthorized { actor: String, user: String },
    #[error("request {id} is already {state}")]
    Conflict { id: String, state: RequestState },
    #[error("policy version conflict: submitted {submitted}, current {current}")]
    VersionConflict { submitted: u64, current: u64 },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("leaf {leaf} outside a tree of {leaves} leaves")]
    LeafOutOfRange { leaf: u32, leaves: u32 },
    #[error("key unwrap failed")]
    UnwrapFailed,
    #[error("malformed envelope: {0}")]
    Envelope(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipientClass {
    Clinician,
    Researcher,
    Insurer,
    #[serde(rename = "self")]
    SelfAccess,
}

impl RecipientClass {
    pub const ALL: [RecipientClass; 4] =
        [RecipientClass::Clinician, RecipientClass::Researcher, RecipientClass::Insurer, RecipientClass::SelfAccess];

    pub fn as_str(self) -> &'static str {
        match self {
            RecipientClass::Clinician => "clinician",
            RecipientClass::Researcher => "researcher",
            RecipientClass::Insurer => "insurer",
            RecipientClass::SelfAccess => "self",
        }
    }

    /// Classes that may only ever see DP aggregates.
    pub fn aggregate_only(self) -> bool {
        matches!(self, RecipientClass::Researcher | RecipientClass::Insurer)
    }
}

impl fmt::Display for RecipientClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecipientClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecipientClass::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown recipient class {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextTag {
    Routine,
    Research,
    Emergency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Allow,
    Deny,
    AskUser,
}
