//! Systematic Reed-Solomon over GF(2^8).
//!
//! The `(k + m) x k` generator is a Vandermonde matrix on the points
//! `0, 1, ..., k + m - 1` multiplied on the right by the inverse of its top
//! `k x k` block, so its first `k` rows are the identity and data chunks are
//! the plain split of the input. Any `k` rows stay invertible.

use sha2::{Digest, Sha256};

use super::gf256::{self, mul, mul_add_slice};
use super::DataplaneError;

pub const MAX_CHUNKS: usize = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub id: [u8; 32],
    pub index: usize,
    pub bytes: Vec<u8>,
}

impl Chunk {
    pub fn new(index: usize, bytes: Vec<u8>) -> Self {
        Chunk { id: content_id(&bytes), index, bytes }
    }

    pub fn verify(&self) -> bool {
        content_id(&self.bytes) == self.id
    }

    pub fn hex_id(&self) -> String {
        hex::encode(self.id)
    }
}

pub fn content_id(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn check_params(k: usize, m: usize) -> Result<(), DataplaneError> {
    if k == 0 || k + m > MAX_CHUNKS {
        return Err(DataplaneError::Params(format!("need k >= 1 and k + m <= {MAX_CHUNKS}, got k={k} m={m}")));
    }
    Ok(())
}

pub fn shard_len(len: usize, k: usize) -> usize {
    len.div_ceil(k)
}

type Matrix = Vec<Vec<u8>>;

fn vandermonde(rows: usize, cols: usize) -> Matrix {
    (0..rows).map(|r| (0..cols).map(|c| gf256::pow(r as u8, c)).collect()).collect()
}

fn invert(mut a: Matrix) -> Option<Matrix> {
    let n = a.len();
    let mut inv: Matrix = (0..n).map(|i| (0..n).map(|j| u8::from(i == j)).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| a[r][col] != 0)?;
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = gf256::inv(a[col][col]);
        for j in 0..n {
            a[col][j] = mul(a[col][j], p);
            inv[col][j] = mul(inv[col][j], p);
        }
        for r in 0..n {
            if r != col && a[r][col] != 0 {
                let f = a[r][col];
                for j in 0..n {
                    a[r][j] ^= mul(f, a[col][j]);
                    inv[r][j] ^= mul(f, inv[col][j]);
                }
            }
        }
    }
    Some(inv)
}

fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).fold(0u8, |acc, i| acc ^ mul(row[i], b[i][c])))
                .collect()
        })
        .collect()
}

/// The systematic generator matrix, `(k + m)` rows by `k` columns.
pub fn generator(k: usize, m: usize) -> Matrix {
    let v = vandermonde(k + m, k);
    let top_inv = invert(v[..k].to_vec()).expect("Vandermonde on distinct points is invertible");
    mat_mul(&v, &top_inv)
}

/// Split into `k` zero-padded data chunks and append `m` parity chunks.
pub fn rs_encode(bytes: &[u8], k: usize, m: usize) -> Result<Vec<Chunk>, DataplaneError> {
    check_params(k, m)?;
    let len = shard_len(bytes.len(), k);
    let mut shards: Vec<Vec<u8>> = (0..k)
        .map(|i| {
            let start = (i * len).min(bytes.len());
            let end = ((i + 1) * len).min(bytes.len());
            let mut s = bytes[start..end].to_vec();
            s.resize(len, 0);
            s
        })
        .collect();
    if m > 0 {
        let g = generator(k, m);
        for row in &g[k..] {
            let mut parity = vec![0u8; len];
            for (c, shard) in row.iter().zip(&shards) {
                mul_add_slice(&mut parity, shard, *c);
            }
            shards.push(parity);
        }
    }
    Ok(shards.into_iter().enumerate().map(|(i, s)| Chunk::new(i, s)).collect())
}

/// Rebuild the original `len` bytes from any `k` distinct chunks. Chunk
/// contents are taken as given; callers verify content ids first.
pub fn rs_decode(chunks: &[Chunk], k: usize, m: usize, len: usize) -> Result<Vec<u8>, DataplaneError> {
    check_params(k, m)?;
    let shard = shard_len(len, k);
    let mut by_index: Vec<Option<&Chunk>> = vec![None; k + m];
    for c in chunks {
        if c.index >= k + m {
            return Err(DataplaneError::Params(format!("chunk index {} out of range", c.index)));
        }
        if c.bytes.len() != shard {
            return Err(DataplaneError::Params(format!("chunk {} has {} bytes, expected {shard}", c.index, c.bytes.len())));
        }
        by_index[c.index].get_or_insert(c);
    }
    let present: Vec<usize> = (0..k + m).filter(|&i| by_index[i].is_some()).collect();
    if present.len() < k {
        let missing = (0..k + m).filter(|&i| by_index[i].is_none()).collect();
        return Err(DataplaneError::Unrecoverable { missing, needed: k, available: present.len() });
    }

    let mut data: Vec<Option<Vec<u8>>> = (0..k).map(|i| by_index[i].map(|c| c.bytes.clone())).collect();
    if data.iter().any(Option::is_none) {
        // Prefer data rows, then parity, to keep the system as close to identity as possible.
        let chosen: Vec<usize> = present.iter().copied().take(k).collect();
        let g = generator(k, m);
        let sub: Matrix = chosen.iter().map(|&r| g[r].clone()).collect();
        let dec = invert(sub).ok_or_else(|| DataplaneError::Params("singular decode matrix".into()))?;
        for (i, slot) in data.iter_mut().enumerate() {
            if slot.is_some() {
                continue;
            }
            let mut out = vec![0u8; shard];
            for (j, &r) in chosen.iter().enumerate() {
                mul_add_slice(&mut out, &by_index[r].expect("chosen rows are present").bytes, dec[i][j]);
            }
            *slot = Some(out);
        }
    }
    let mut out = Vec::with_capacity(shard * k);
    for s in data {
        out.extend_from_slice(&s.expect("all data rows filled"));
    }
    out.truncate(len);
    Ok(out)
}
