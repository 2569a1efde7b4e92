//! Append-only, hash-chained audit ledger.
//!
//! Only transfer-request lifecycle events and key/decryption/release events are
//! recorded; ordinary ingestion never touches the ledger.
//!
//! # Canonical event encoding
//!
//! Integers are little-endian; a string is a `u32` byte length followed by
//! UTF-8 bytes.
//!
//! | field        | encoding                                                        |
//! |--------------|-----------------------------------------------------------------|
//! | kind         | `u8`: Requested 1, Notified 2, Decided 3, KeyReleased 4, Decrypted 5, Revoked 6, DpReleased 7 |
//! | request_id   | `u8` presence flag, then string if present                      |
//! | user_id      | string                                                          |
//! | actor        | string                                                          |
//! | categories   | `u32` count, then one `u8` category code each                   |
//! | decision     | `u8`: none 0, allow 1, deny 2                                   |
//! | decided_by   | `u8`: none 0, policy 1, user 2                                  |
//! | timestamp    | `i64` milliseconds                                              |
//! | detail       | `u32` count, then (key, value) string pairs in key order        |
//!
//! `block_hash = SHA-256(index as u64 || prev_hash || canonical event bytes)`.
//!
//! # File format
//!
//! `"PETL"`, a version byte, then one record per block: `u32` body length and
//! a body of `index u64 || prev_hash[32] || block_hash[32] || event bytes`.

mod encoding;
mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::Category;

pub use encoding::{decode_event, encode_event, encode_record, FILE_MAGIC, FILE_VERSION, HEADER_LEN};
pub use store::{verify_bytes, verify_chain, verify_file, ChainStatus, Filter, Ledger, Observer};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("invalid event: {0}")]
    Invalid(String),
    #[error("ledger file is corrupt at block {index}: {reason}")]
    Corrupt { index: u64, reason: String },
    #[error("ledger I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Requested,
    Notified,
    Decided,
    KeyReleased,
    Decrypted,
    Revoked,
    DpReleased,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Requested,
        EventKind::Notified,
        EventKind::Decided,
        EventKind::KeyReleased,
        EventKind::Decrypted,
        EventKind::Revoked,
        EventKind::DpReleased,
    ];

    pub fn code(self) -> u8 {
        match self {
            EventKind::Requested => 1,
            EventKind::Notified => 2,
            EventKind::Decided => 3,
            EventKind::KeyReleased => 4,
            EventKind::Decrypted => 5,
            EventKind::Revoked => 6,
            EventKind::DpReleased => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        EventKind::ALL.into_iter().find(|k| k.code() == code)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Deny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecidedBy {
    Policy,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    pub user_id: String,
    pub actor: String,
    #[serde(default)]
    pub categories: Vec<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<DecidedBy>,
    pub timestamp: i64,
    #[serde(default)]
    pub detail: BTreeMap<String, String>,
}

impl AuditEvent {
    pub fn new(kind: EventKind, user_id: impl Into<String>, actor: impl Into<String>, timestamp: i64) -> Self {
        AuditEvent {
            kind,
            request_id: None,
            user_id: user_id.into(),
            actor: actor.into(),
            categories: Vec::new(),
            decision: None,
            decided_by: None,
            timestamp,
            detail: BTreeMap::new(),
        }
    }

    pub fn with_request(mut self, id: impl Into<String>) -> Self {
        self.request_id = Some(id.into());
        self
    }

    pub fn with_categories(mut self, categories: impl IntoIterator<Item = Category>) -> Self {
        self.categories = categories.into_iter().collect();
        self
    }

    pub fn with_decision(mut self, decision: Decision, by: DecidedBy) -> Self {
        self.decision = Some(decision);
        self.decided_by = Some(by);
        self
    }

    pub fn with_detail(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.detail.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.user_id.is_empty() || self.actor.is_empty() {
            return Err(LedgerError::Invalid("user_id and actor are required".into()));
        }
        let needs_request = matches!(
            self.kind,
            EventKind::Requested | EventKind::Notified | EventKind::Decided | EventKind::KeyReleased | EventKind::Decrypted
        );
        if needs_request && self.request_id.as_deref().is_none_or(str::is_empty) {
            return Err(LedgerError::Invalid(format!("{:?} requires a request_id", self.kind)));
        }
        let is_decided = self.kind == EventKind::Decided;
        if is_decided && (self.decision.is_none() || self.decided_by.is_none()) {
            return Err(LedgerError::Invalid("Decided requires decision and decided_by".into()));
        }
        if !is_decided && (self.decision.is_some() || self.decided_by.is_some()) {
            return Err(LedgerError::Invalid(format!("{:?} must not carry a decision", self.kind)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditBlock {
    pub index: u64,
    #[serde(with = "hex_digest")]
    pub prev_hash: [u8; 32],
    #[serde(with = "hex_digest")]
    pub block_hash: [u8; 32],
    pub event: AuditEvent,
}

mod hex_digest {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(D::Error::custom)?;
        bytes.try_into().map_err(|_| D::Error::custom("digest must be 32 bytes"))
    }
}
