//! Thin wrappers over HMAC-SHA256 and ChaCha20-Poly1305.

use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Nonce};
use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

pub type Key = [u8; 32];

/// HMAC-SHA256 over the concatenation of `parts`, each prefixed by its length
/// so that part boundaries are unambiguous.
pub fn hmac(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(&(p.len() as u32).to_le_bytes());
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

/// Constant-time comparison of a truncated HMAC tag.
pub fn verify_hmac(key: &[u8], parts: &[&[u8]], tag: &[u8]) -> bool {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(&(p.len() as u32).to_le_bytes());
        mac.update(p);
    }
    mac.verify_truncated_left(tag).is_ok()
}

pub fn seal(key: &Key, nonce: &[u8; 12], aad: &[u8], msg: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(key.into());
    cipher
        .encrypt(&Nonce::from(*nonce), Payload { msg, aad })
        .expect("encryption of in-memory buffers cannot fail")
}

pub fn open(key: &Key, nonce: &[u8; 12], aad: &[u8], ciphertext: &[u8]) -> Option<Vec<u8>> {
    let cipher = ChaCha20Poly1305::new(key.into());
    cipher.decrypt(&Nonce::from(*nonce), Payload { msg: ciphertext, aad }).ok()
}
