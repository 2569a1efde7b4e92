use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::{AuditBlock, AuditEvent, DecidedBy, Decision, EventKind};
use crate::telemetry::Category;

pub const FILE_MAGIC: &[u8; 4] = b"PETL";
pub const FILE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 5;
/// index + prev_hash + block_hash.
const BODY_PREFIX: usize = 8 + 32 + 32;
const MAX_RECORD: usize = 16 << 20;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_event(e: &AuditEvent) -> Vec<u8> {
    let mut out = vec![e.kind.code()];
    match &e.request_id {
        Some(id) => {
            out.push(1);
            put_str(&mut out, id);
        }
        None => out.push(0),
    }
    put_str(&mut out, &e.user_id);
    put_str(&mut out, &e.actor);
    out.extend_from_slice(&(e.categories.len() as u32).to_le_bytes());
    out.extend(e.categories.iter().map(|c| c.code()));
    out.push(match e.decision {
        None => 0,
        Some(Decision::Allow) => 1,
        Some(Decision::Deny) => 2,
    });
    out.push(match e.decided_by {
        None => 0,
        Some(DecidedBy::Policy) => 1,
        Some(DecidedBy::User) => 2,
    });
    out.extend_from_slice(&e.timestamp.to_le_bytes());
    out.extend_from_slice(&(e.detail.len() as u32).to_le_bytes());
    for (k, v) in &e.detail {
        put_str(&mut out, k);
        put_str(&mut out, v);
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("truncated event")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "string is not UTF-8".to_string())
    }
}

/// Strict inverse of [`encode_event`]: rejects any byte string that is not
/// the canonical encoding of some event.
pub fn decode_event(bytes: &[u8]) -> Result<AuditEvent, String> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let kind = EventKind::from_code(c.u8()?).ok_or("unknown event kind")?;
    let request_id = match c.u8()? {
        0 => None,
        1 => Some(c.string()?),
        f => return Err(format!("bad presence flag {f}")),
    };
    let user_id = c.string()?;
    let actor = c.string()?;
    let n = c.u32()? as usize;
    let categories: Vec<Category> = c.take(n)?.iter().map(|&code| Category::from_code(code)).collect();
    let decision = match c.u8()? {
        0 => None,
        1 => Some(Decision::Allow),
        2 => Some(Decision::Deny),
        d => return Err(format!("bad decision code {d}")),
    };
    let decided_by = match c.u8()? {
        0 => None,
        1 => Some(DecidedBy::Policy),
        2 => Some(DecidedBy::User),
        d => return Err(format!("bad decided_by code {d}")),
    };
    let timestamp = i64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let n = c.u32()? as usize;
    let mut detail = BTreeMap::new();
    for _ in 0..n {
        let k = c.string()?;
        let v = c.string()?;
        detail.insert(k, v);
    }
    if c.pos != bytes.len() {
        return Err("trailing bytes after event".into());
    }
    let event = AuditEvent { kind, request_id, user_id, actor, categories, decision, decided_by, timestamp, detail };
    if encode_event(&event) != bytes {
        return Err("event encoding is not canonical".into());
    }
    Ok(event)
}

pub fn block_hash(index: u64, prev_hash: &[u8; 32], event_bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(index.to_le_bytes());
    h.update(prev_hash);
    h.update(event_bytes);
    h.finalize().into()
}

/// Length-prefixed on-disk record for `block`.
pub fn encode_record(block: &AuditBlock) -> Vec<u8> {
    let event = encode_event(&block.event);
    let mut out = Vec::with_capacity(4 + BODY_PREFIX + event.len());
    out.extend_from_slice(&((BODY_PREFIX + event.len()) as u32).to_le_bytes());
    out.extend_from_slice(&block.index.to_le_bytes());
    out.extend_from_slice(&block.prev_hash);
    out.extend_from_slice(&block.block_hash);
    out.extend_from_slice(&event);
    out
}

/// One parsed record: stored fields plus the raw event bytes.
pub(crate) struct RawRecord<'a> {
    pub index: u64,
    pub prev_hash: [u8; 32],
    pub block_hash: [u8; 32],
    pub event_bytes: &'a [u8],
}

/// Parse the record starting at `pos`; returns it and the next offset.
pub(crate) fn read_record(buf: &[u8], pos: usize) -> Result<(RawRecord<'_>, usize), String> {
    let len_bytes = buf.get(pos..pos + 4).ok_or("truncated record length")?;
    let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
    if !(BODY_PREFIX..=MAX_RECORD).contains(&len) {
        return Err(format!("implausible record length {len}"));
    }
    let body = buf.get(pos + 4..pos + 4 + len).ok_or("truncated record body")?;
    let rec = RawRecord {
        index: u64::from_le_bytes(body[..8].try_into().expect("8 bytes")),
        prev_hash: body[8..40].try_into().expect("32 bytes"),
        block_hash: body[40..72].try_into().expect("32 bytes"),
        event_bytes: &body[72..],
    };
    Ok((rec, pos + 4 + len))
}
