use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConsentError, HolderKeys, RevocationTree};
use crate::crypto::{hmac, open, seal, verify_hmac, Key};
use crate::telemetry::Category;

pub const ENVELOPE_MAGIC: &[u8; 4] = b"PETE";
pub const ENVELOPE_VERSION: u8 = 1;
const WRAP_CT_LEN: usize = 32 + 16;
const WRAP_LEN: usize = 4 + 12 + WRAP_CT_LEN;
const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 16 + 4;

/// Possession of this key is what "the holder was granted the category" means.
#[derive(Clone, Serialize, Deserialize)]
pub struct CategoryGrant {
    pub category: Category,
    pub key: Key,
}

impl std::fmt::Debug for CategoryGrant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CategoryGrant").field("category", &self.category).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wrap {
    pub node: u32,
    pub nonce: [u8; 12],
    /// Wrapped 32-byte key followed by the 16-byte Poly1305 tag.
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEnvelope {
    pub category: Category,
    pub epoch: u64,
    pub key_check: [u8; 16],
    pub wraps: Vec<Wrap>,
}

fn wrap_key(node_key: &Key, grant: &Key, epoch: u64, category: Category, node: u32) -> Key {
    hmac(node_key, &[b"wrap", grant, &epoch.to_le_bytes(), &[category.code()], &node.to_le_bytes()])
}

fn wrap_aad(epoch: u64, category: Category, node: u32) -> Vec<u8> {
    let mut aad = Vec::with_capacity(4 + 8 + 1 + 4);
    aad.extend_from_slice(ENVELOPE_MAGIC);
    aad.extend_from_slice(&epoch.to_le_bytes());
    aad.push(category.code());
    aad.extend_from_slice(&node.to_le_bytes());
    aad
}

fn check_parts(epoch: u64, category: Category) -> [u8; 9] {
    let mut p = [0u8; 9];
    p[..8].copy_from_slice(&epoch.to_le_bytes());
    p[8] = category.code();
    p
}

impl RevocationTree {
    /// Start a new epoch and wrap `data_key` under every node of the current
    /// cover. With every leaf revoked the envelope has no wraps.
    pub fn rotate_epoch_and_wrap<R: Rng + ?Sized>(
        &mut self,
        category: Category,
        data_key: &Key,
        rng: &mut R,
    ) -> KeyEnvelope {
        let epoch = self.bump_epoch();
        let grant = self.grant(category);
        let wraps = self
            .compute_cover()
            .into_iter()
            .map(|node| {
                let mut nonce = [0u8; 12];
                rng.fill(&mut nonce);
                let k = wrap_key(&self.node_key(node), &grant.key, epoch, category, node);
                Wrap { node, nonce, ciphertext: seal(&k, &nonce, &wrap_aad(epoch, category, node), data_key) }
            })
            .collect();
        let tag = hmac(data_key, &[b"key-check", &check_parts(epoch, category)]);
        let mut key_check = [0u8; 16];
        key_check.copy_from_slice(&tag[..16]);
        KeyEnvelope { category, epoch, key_check, wraps }
    }
}

/// Recover the data key. Every failure (not covered, wrong grant, tampered
/// wrap, bad key check) returns the same `UnwrapFailed`.
pub fn unwrap(envelope: &KeyEnvelope, holder: &HolderKeys, grant: &CategoryGrant) -> Result<Key, ConsentError> {
    if grant.category != envelope.category {
        return Err(ConsentError::UnwrapFailed);
    }
    for wrap in &envelope.wraps {
        let Some((_, node_key)) = holder.keys.iter().find(|(n, _)| *n == wrap.node) else {
            continue;
        };
        let k = wrap_key(node_key, &grant.key, envelope.epoch, envelope.category, wrap.node);
        let aad = wrap_aad(envelope.epoch, envelope.category, wrap.node);
        let Some(plain) = open(&k, &wrap.nonce, &aad, &wrap.ciphertext) else {
            continue;
        };
        let Ok(data_key) = <Key>::try_from(plain.as_slice()) else {
            continue;
        };
        if verify_hmac(&data_key, &[b"key-check", &check_parts(envelope.epoch, envelope.category)], &envelope.key_check) {
            return Ok(data_key);
        }
    }
    Err(ConsentError::UnwrapFailed)
}

impl KeyEnvelope {
    /// `"PETE" | version u8 | category u8 | epoch u64 | key_check[16] | count u32`
    /// then per wrap `node u32 | nonce[12] | ciphertext[32] | tag[16]`; little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.wraps.len() * WRAP_LEN);
        out.extend_from_slice(ENVELOPE_MAGIC);
        out.push(ENVELOPE_VERSION);
        out.push(self.category.code());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.key_check);
        out.extend_from_slice(&(self.wraps.len() as u32).to_le_bytes());
        for w in &self.wraps {
            out.extend_from_slice(&w.node.to_le_bytes());
            out.extend_from_slice(&w.nonce);
            out.extend_from_slice(&w.ciphertext);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ConsentError> {
        let bad = |m: &str| ConsentError::Envelope(m.to_string());
        if bytes.len() < HEADER_LEN || &bytes[..4] != ENVELOPE_MAGIC {
            return Err(bad("missing magic or short header"));
        }
        if bytes[4] != ENVELOPE_VERSION {
            return Err(bad("unsupported version"));
        }
        let category = Category::from_code(bytes[5]);
        if category == Category::Unknown {
            return Err(bad("unknown category code"));
        }
        let epoch = u64::from_le_bytes(bytes[6..14].try_into().expect("8 bytes"));
        let key_check: [u8; 16] = bytes[14..30].try_into().expect("16 bytes");
        let count = u32::from_le_bytes(bytes[30..34].try_into().expect("4 bytes")) as usize;
        let body = &bytes[HEADER_LEN..];
        if count.checked_mul(WRAP_LEN) != Some(body.len()) {
            return Err(bad("wrap count does not match length"));
        }
        let wraps = body
            .chunks_exact(WRAP_LEN)
            .map(|c| Wrap {
                node: u32::from_le_bytes(c[..4].try_into().expect("4 bytes")),
                nonce: c[4..16].try_into().expect("12 bytes"),
                ciphertext: c[16..].to_vec(),
            })
            .collect();
        Ok(KeyEnvelope { category, epoch, key_check, wraps })
    }
}
