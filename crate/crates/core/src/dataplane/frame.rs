//! Authenticated framing.
//!
//! Wire format, little-endian:
//!
//! ```text
//! "PETF" | version u8 | codec u8 | seq u64 | len u32 | payload[len] | tag[16]
//! ```
//!
//! `tag` is the first 16 bytes of HMAC-SHA256 under the session key over
//! `u32(header_len + len) || header || payload`, where `header` is the first
//! 18 bytes.

use super::DataplaneError;
use crate::crypto::{hmac, verify_hmac, Key};

pub const FRAME_MAGIC: &[u8; 4] = b"PETF";
pub const FRAME_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 4 + 1 + 1 + 8 + 4;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub codec: u8,
    pub seq: u64,
    pub payload: Vec<u8>,
}

pub fn encode_frame(key: &Key, codec: u8, seq: u64, payload: &[u8]) -> Result<Vec<u8>, DataplaneError> {
    let len = u32::try_from(payload.len()).map_err(|_| DataplaneError::Malformed("payload too large".into()))?;
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len() + TAG_LEN);
    out.extend_from_slice(FRAME_MAGIC);
    out.push(FRAME_VERSION);
    out.push(codec);
    out.extend_from_slice(&seq.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload);
    let tag = hmac(key, &[&out]);
    out.extend_from_slice(&tag[..TAG_LEN]);
    Ok(out)
}

/// Check the tag, then parse. Nothing from the frame is interpreted before
/// the tag has verified, apart from the length needed to locate it.
pub fn decode_frame(key: &Key, bytes: &[u8]) -> Result<Frame, DataplaneError> {
    if bytes.len() < FRAME_HEADER_LEN + TAG_LEN {
        return Err(DataplaneError::Malformed("frame shorter than header and tag".into()));
    }
    let (body, tag) = bytes.split_at(bytes.len() - TAG_LEN);
    if !verify_hmac(key, &[body], tag) {
        return Err(DataplaneError::Integrity);
    }
    if &body[..4] != FRAME_MAGIC || body[4] != FRAME_VERSION {
        return Err(DataplaneError::Malformed("bad magic or version".into()));
    }
    let len = u32::from_le_bytes(body[14..18].try_into().expect("4 bytes")) as usize;
    if body.len() != FRAME_HEADER_LEN + len {
        return Err(DataplaneError::Malformed("length field does not match frame size".into()));
    }
    Ok(Frame {
        codec: body[5],
        seq: u64::from_le_bytes(body[6..14].try_into().expect("8 bytes")),
        payload: body[FRAME_HEADER_LEN..].to_vec(),
    })
}

/// Sending half of a session: assigns strictly increasing sequence numbers.
pub struct FrameSender {
    key: Key,
    next_seq: u64,
}

impl FrameSender {
    pub fn new(key: Key) -> Self {
        FrameSender { key, next_seq: 0 }
    }

    pub fn frame(&mut self, codec: u8, payload: &[u8]) -> Result<Vec<u8>, DataplaneError> {
        let f = encode_frame(&self.key, codec, self.next_seq, payload)?;
        self.next_seq += 1;
        Ok(f)
    }
}

/// Receiving half: rejects bad tags and any sequence number not above the last
/// accepted one.
pub struct FrameReceiver {
    key: Key,
    last_seq: Option<u64>,
}

impl FrameReceiver {
    pub fn new(key: Key) -> Self {
        FrameReceiver { key, last_seq: None }
    }

    pub fn unframe(&mut self, bytes: &[u8]) -> Result<Frame, DataplaneError> {
        let frame = decode_frame(&self.key, bytes)?;
        if let Some(last) = self.last_seq {
            if frame.seq <= last {
                return Err(DataplaneError::Replay { seq: frame.seq, last });
            }
        }
        self.last_seq = Some(frame.seq);
        Ok(frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEY: Key = [5u8; 32];

    #[test]
    fn layout() {
        let f = encode_frame(&KEY, 1, 0x0102, b"abc").unwrap();
        assert_eq!(&f[..4], b"PETF");
        assert_eq!(f[4], 1);
        assert_eq!(f[5], 1);
        assert_eq!(&f[6..14], &0x0102u64.to_le_bytes());
        assert_eq!(&f[14..18], &3u32.to_le_bytes());
        assert_eq!(&f[18..21], b"abc");
        assert_eq!(f.len(), 18 + 3 + 16);
    }

    #[test]
    fn payload_flip_fails_tag() {
        let f = encode_frame(&KEY, 0, 1, b"payload").unwrap();
        let mut bad = f.clone();
        bad[FRAME_HEADER_LEN] ^= 1;
        assert!(matches!(decode_frame(&KEY, &bad), Err(DataplaneError::Integrity)));
        assert!(matches!(decode_frame(&[6u8; 32], &f), Err(DataplaneError::Integrity)));
    }

    #[test]
    fn replay_after_newer() {
        let mut rx = FrameReceiver::new(KEY);
        let f5 = encode_frame(&KEY, 0, 5, b"five").unwrap();
        let f6 = encode_frame(&KEY, 0, 6, b"six").unwrap();
        rx.unframe(&f5).unwrap();
        rx.unframe(&f6).unwrap();
        assert!(matches!(rx.unframe(&f5), Err(DataplaneError::Replay { seq: 5, last: 6 })));
        assert!(matches!(rx.unframe(&f6), Err(DataplaneError::Replay { .. })));
    }

    #[test]
    fn sender_sequence() {
        let mut tx = FrameSender::new(KEY);
        let mut rx = FrameReceiver::new(KEY);
        for i in 0..10u64 {
            let f = rx.unframe(&tx.frame(0, &i.to_le_bytes()).unwrap()).unwrap();
            assert_eq!(f.seq, i);
        }
    }
}
