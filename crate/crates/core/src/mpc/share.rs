use serde::{Deserialize, Serialize};

use super::dealer::MacKeyShare;
use super::{MpcContext, MpcError};
use crate::arith::{add_mod, mul_mod, sub_mod};

/// One party's piece of an authenticated sharing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthShare {
    pub ctx: u64,
    pub party: usize,
    pub value: u64,
    pub mac: u64,
}

fn check_pair(ctx: &MpcContext, a: &AuthShare, b: &AuthShare) -> Result<(), MpcError> {
    if a.ctx != ctx.id || b.ctx != ctx.id || a.party != b.party {
        return Err(MpcError::ContextMismatch);
    }
    Ok(())
}

pub fn add_shares(ctx: &MpcContext, a: &AuthShare, b: &AuthShare) -> Result<AuthShare, MpcError> {
    check_pair(ctx, a, b)?;
    let p = ctx.modulus;
    Ok(AuthShare { value: add_mod(a.value, b.value, p), mac: add_mod(a.mac, b.mac, p), ..*a })
}

pub fn sub_shares(ctx: &MpcContext, a: &AuthShare, b: &AuthShare) -> Result<AuthShare, MpcError> {
    check_pair(ctx, a, b)?;
    let p = ctx.modulus;
    Ok(AuthShare { value: sub_mod(a.value, b.value, p), mac: sub_mod(a.mac, b.mac, p), ..*a })
}

/// Multiply by a public constant.
pub fn scale_share(ctx: &MpcContext, a: &AuthShare, c: u64) -> AuthShare {
    let p = ctx.modulus;
    AuthShare { value: mul_mod(a.value, c % p, p), mac: mul_mod(a.mac, c % p, p), ..*a }
}

/// Add a public constant: party 0 shifts its value, every party shifts its MAC by `alpha_i * c`.
pub fn add_public(ctx: &MpcContext, a: &AuthShare, c: u64, key: &MacKeyShare) -> Result<AuthShare, MpcError> {
    if key.party != a.party || key.ctx != a.ctx || a.ctx != ctx.id {
        return Err(MpcError::ContextMismatch);
    }
    let p = ctx.modulus;
    let c = c % p;
    let value = if a.party == 0 { add_mod(a.value, c, p) } else { a.value };
    Ok(AuthShare { value, mac: add_mod(a.mac, mul_mod(key.alpha, c, p), p), ..*a })
}

/// Sum the value shares without any check. Test and dealer bookkeeping only.
pub fn reconstruct(ctx: &MpcContext, shares: &[AuthShare]) -> u64 {
    shares.iter().fold(0, |acc, s| add_mod(acc, s.value, ctx.modulus))
}
