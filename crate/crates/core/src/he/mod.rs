//! Leveled BGV homomorphic encryption over `Z_q[X]/(X^N + 1)`.
//!
//! Ciphertexts are kept in residue form across a chain of word-sized primes,
//! ring products go through the negacyclic NTT, and N plaintext slots are
//! packed per ciphertext so additions and multiplications act slot-wise.
//! Multiplication relinearizes with base-2^16 key switching and then drops
//! one prime by modulus switching; the chain length therefore bounds the
//! multiplicative depth. There is no bootstrapping.
//!
//! **None of the presets are secure.** They are sized for desk experiments.

mod encoding;
mod keys;
mod ntt;
mod ops;
mod params;
mod poly;
mod serialize;

use thiserror::Error;

pub use encoding::Plaintext;
pub use keys::{KeySet, PublicKey, RelinKey, SecretKey, RELIN_DIGIT_BITS};
pub use ntt::NttTable;
pub use ops::{Ciphertext, EncryptionNoise, MIN_DECRYPT_BUDGET_BITS};
pub use params::{HeContext, HeParams, Preset, DEFAULT_ERROR_STD};
pub use serialize::FORMAT_VERSION;

pub const NOT_SECURE_BANNER: &str =
    "WARNING: homomorphic-encryption parameters are toy-sized and NOT SECURE; for experiments only";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("parameter error: {0}")]
    Params(String),
    #[error("value {value} is outside [0, {modulus})")]
    Range { value: u64, modulus: u64 },
    #[error("{given} values do not fit in {slots} slots")]
    TooManySlots { given: usize, slots: usize },
    #[error("ciphertext levels differ ({left} vs {right}); mod-switch first")]
    LevelMismatch { left: usize, right: usize },
    #[error("multiplicative depth exhausted (ciphertext at bottom level)")]
    DepthExhausted,
    #[error("ciphertext degree not supported by this operation")]
    Degree,
    #[error("relinearization key is missing an entry for this level")]
    MissingRelinKey,
    #[error("decryption integrity check failed: noise budget {budget:.2} bits")]
    NoiseExhausted { budget: f64 },
    #[error("serialized object was produced under different parameters")]
    ParamsMismatch,
    #[error("malformed encoding: {0}")]
    Serialization(String),
}
