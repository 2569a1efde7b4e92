//! Privacy-preserving primitives for wearable health telemetry.

pub mod arith;
pub mod crypto;
pub mod telemetry;
pub mod he;
pub mod mpc;
pub mod dp;
pub mod ledger;
pub mod consent;
pub mod dataplane;
