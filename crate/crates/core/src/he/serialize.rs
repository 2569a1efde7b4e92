//! Binary encodings for keys and ciphertexts.
//!
//! Layout: 4-byte magic, 1-byte version, 8-byte params hash, then a
//! type-specific body of little-endian integers. Every residue array is
//! prefixed with its `u32` length.

use super::keys::{PublicKey, RelinEntry, RelinKey, SecretKey};
use super::ops::Ciphertext;
use super::params::HeContext;
use super::poly::RnsPoly;
use super::HeError;

pub const FORMAT_VERSION: u8 = 1;
pub const MAGIC_CIPHERTEXT: &[u8; 4] = b"PETC";
pub const MAGIC_PUBLIC_KEY: &[u8; 4] = b"PETP";
pub const MAGIC_SECRET_KEY: &[u8; 4] = b"PETS";
pub const MAGIC_RELIN_KEY: &[u8; 4] = b"PETR";

struct Writer(Vec<u8>);

impl Writer {
    fn new(ctx: &HeContext, magic: &[u8; 4]) -> Self {
        let mut buf = Vec::new();
        buf.extend_from_slice(magic);
        buf.push(FORMAT_VERSION);
        buf.extend_from_slice(&ctx.params.hash());
        Writer(buf)
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn poly(&mut self, p: &RnsPoly) {
        self.u32(p.residues.len() as u32);
        for r in &p.residues {
            self.u32(r.len() as u32);
            for x in r {
                self.0.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(ctx: &HeContext, buf: &'a [u8], magic: &[u8; 4]) -> Result<Self, HeError> {
        if buf.len() < 13 {
            return Err(HeError::Serialization("truncated header".into()));
        }
        if &buf[..4] != magic {
            return Err(HeError::Serialization(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf[..4]),
                String::from_utf8_lossy(magic)
            )));
        }
        if buf[4] != FORMAT_VERSION {
            return Err(HeError::Serialization(format!("unsupported version {}", buf[4])));
        }
        if buf[5..13] != ctx.params.hash() {
            return Err(HeError::ParamsMismatch);
        }
        Ok(Reader { buf, pos: 13 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], HeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| HeError::Serialization("truncated body".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, HeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, HeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn poly(&mut self, ctx: &HeContext, expected_level: Option<usize>) -> Result<RnsPoly, HeError> {
        let primes = self.u32()? as usize;
        if primes == 0 || primes > ctx.params.modulus_chain.len() {
            return Err(HeError::Serialization(format!("invalid prime count {primes}")));
        }
        if let Some(l) = expected_level {
            if primes != l + 1 {
                return Err(HeError::Serialization("residue count does not match level".into()));
            }
        }
        let mut residues = Vec::with_capacity(primes);
        for i in 0..primes {
            let len = self.u32()? as usize;
            if len != ctx.degree() {
                return Err(HeError::Serialization(format!("residue length {len} != ring degree")));
            }
            let q = ctx.modulus(i);
            let mut r = Vec::with_capacity(len);
            for _ in 0..len {
                let x = self.u64()?;
                if x >= q {
                    return Err(HeError::Serialization(format!("residue {x} not reduced mod q_{i}")));
                }
                r.push(x);
            }
            residues.push(r);
        }
        Ok(RnsPoly { residues })
    }

    fn finish(self) -> Result<(), HeError> {
        if self.pos != self.buf.len() {
            return Err(HeError::Serialization("trailing bytes".into()));
        }
        Ok(())
    }
}

impl HeContext {
    pub fn serialize_ciphertext(&self, ct: &Ciphertext) -> Vec<u8> {
        let mut w = Writer::new(self, MAGIC_CIPHERTEXT);
        w.u32(ct.level as u32);
        w.u32(ct.parts.len() as u32);
        for p in &ct.parts {
            w.poly(p);
        }
        w.0
    }

    pub fn deserialize_ciphertext(&self, bytes: &[u8]) -> Result<Ciphertext, HeError> {
        let mut r = Reader::open(self, bytes, MAGIC_CIPHERTEXT)?;
        let level = r.u32()? as usize;
        if level > self.top_level() {
            return Err(HeError::Serialization(format!("level {level} above chain top")));
        }
        let count = r.u32()? as usize;
        if !(2..=3).contains(&count) {
            return Err(HeError::Serialization(format!("ciphertext with {count} parts")));
        }
        let parts = (0..count).map(|_| r.poly(self, Some(level))).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Ciphertext { parts, level })
    }

    pub fn serialize_public_key(&self, pk: &PublicKey) -> Vec<u8> {
        let mut w = Writer::new(self, MAGIC_PUBLIC_KEY);
        w.poly(&pk.p0);
        w.poly(&pk.p1);
        w.0
    }

    pub fn deserialize_public_key(&self, bytes: &[u8]) -> Result<PublicKey, HeError> {
        let top = Some(self.top_level());
        let mut r = Reader::open(self, bytes, MAGIC_PUBLIC_KEY)?;
        let p0 = r.poly(self, top)?;
        let p1 = r.poly(self, top)?;
        r.finish()?;
        Ok(PublicKey { p0, p1 })
    }

    pub fn serialize_secret_key(&self, sk: &SecretKey) -> Vec<u8> {
        let mut w = Writer::new(self, MAGIC_SECRET_KEY);
        w.poly(&sk.s);
        w.0
    }

    pub fn deserialize_secret_key(&self, bytes: &[u8]) -> Result<SecretKey, HeError> {
        let mut r = Reader::open(self, bytes, MAGIC_SECRET_KEY)?;
        let s = r.poly(self, Some(self.top_level()))?;
        r.finish()?;
        let q0 = self.modulus(0);
        let coeffs = s.residues[0]
            .iter()
            .map(|&x| match x {
                0 => Ok(0),
                1 => Ok(1),
                x if x == q0 - 1 => Ok(-1),
                _ => Err(HeError::Serialization("secret key is not ternary".into())),
            })
            .collect::<Result<Vec<i64>, _>>()?;
        let sk = SecretKey::from_coeffs(self, coeffs);
        if sk.s != s {
            return Err(HeError::Serialization("inconsistent secret key residues".into()));
        }
        Ok(sk)
    }

    pub fn serialize_relin_key(&self, rlk: &RelinKey) -> Vec<u8> {
        let mut w = Writer::new(self, MAGIC_RELIN_KEY);
        w.u32(rlk.entries.len() as u32);
        for e in &rlk.entries {
            w.u32(e.prime as u32);
            w.u32(e.digit);
            w.poly(&e.k0);
            w.poly(&e.k1);
        }
        w.0
    }

    pub fn deserialize_relin_key(&self, bytes: &[u8]) -> Result<RelinKey, HeError> {
        let top = Some(self.top_level());
        let mut r = Reader::open(self, bytes, MAGIC_RELIN_KEY)?;
        let count = r.u32()? as usize;
        if count > 64 * self.params.modulus_chain.len() {
            return Err(HeError::Serialization(format!("implausible relin entry count {count}")));
        }
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            let prime = r.u32()? as usize;
            let digit = r.u32()?;
            if prime > self.top_level() {
                return Err(HeError::Serialization("relin entry prime out of range".into()));
            }
            entries.push(RelinEntry { prime, digit, k0: r.poly(self, top)?, k1: r.poly(self, top)? });
        }
        r.finish()?;
        Ok(RelinKey { entries })
    }
}
