//! Payload codecs. Codec 0 is the identity. Codec 1 is Brotli inside a small
//! container: `crc32(original) u32 | original length u32 | brotli stream`, so
//! a damaged stream fails loudly instead of decoding to different bytes.

use std::io::{Read, Write};

use super::DataplaneError;

pub const CODEC_NONE: u8 = 0;
pub const CODEC_BROTLI: u8 = 1;
pub const DEFAULT_CODEC: u8 = CODEC_BROTLI;

const BROTLI_QUALITY: u32 = 5;
const BROTLI_MAX_LGWIN: u32 = 22;
const BUF: usize = 4096;

pub fn compress(bytes: &[u8], codec: u8) -> Result<Vec<u8>, DataplaneError> {
    match codec {
        CODEC_NONE => Ok(bytes.to_vec()),
        CODEC_BROTLI => {
            let len = u32::try_from(bytes.len()).map_err(|_| DataplaneError::Codec("input longer than 4 GiB".into()))?;
            let mut out = Vec::with_capacity(8 + bytes.len() / 2);
            out.extend_from_slice(&crc32fast::hash(bytes).to_le_bytes());
            out.extend_from_slice(&len.to_le_bytes());
            {
                // Small packets do not need (or pay for) a 4 MiB window.
                let lgwin = (usize::BITS - bytes.len().leading_zeros()).clamp(10, BROTLI_MAX_LGWIN);
                let mut w = brotli::CompressorWriter::new(&mut out, BUF, BROTLI_QUALITY, lgwin);
                w.write_all(bytes).map_err(|e| DataplaneError::Codec(e.to_string()))?;
            }
            Ok(out)
        }
        other => Err(DataplaneError::UnknownCodec(other)),
    }
}

pub fn decompress(bytes: &[u8], codec: u8) -> Result<Vec<u8>, DataplaneError> {
    match codec {
        CODEC_NONE => Ok(bytes.to_vec()),
        CODEC_BROTLI => {
            if bytes.len() < 8 {
                return Err(DataplaneError::Codec("truncated container".into()));
            }
            let crc = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"));
            let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
            let mut out = Vec::with_capacity(len);
            brotli::Decompressor::new(&bytes[8..], BUF)
                .take(len as u64 + 1)
                .read_to_end(&mut out)
                .map_err(|e| DataplaneError::Codec(format!("brotli: {e}")))?;
            if out.len() != len || crc32fast::hash(&out) != crc {
                return Err(DataplaneError::Codec("decoded length or checksum mismatch".into()));
            }
            Ok(out)
        }
        other => Err(DataplaneError::UnknownCodec(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_codec() {
        let data = b"\x00\x01raw bytes".to_vec();
        assert_eq!(compress(&data, CODEC_NONE).unwrap(), data);
        assert_eq!(decompress(&data, CODEC_NONE).unwrap(), data);
    }

    #[test]
    fn brotli_roundtrip() {
        for data in [Vec::new(), vec![7u8; 1], (0..=255u8).cycle().take(70_000).collect()] {
            let c = compress(&data, CODEC_BROTLI).unwrap();
            assert_eq!(decompress(&c, CODEC_BROTLI).unwrap(), data);
        }
    }

    #[test]
    fn unknown_codec() {
        assert!(matches!(compress(b"x", 9), Err(DataplaneError::UnknownCodec(9))));
        assert!(matches!(decompress(b"x", 2), Err(DataplaneError::UnknownCodec(2))));
    }

    #[test]
    fn corruption_never_silent() {
        let data: Vec<u8> = br#"{"device_id":"d1","value":72.5}"#.repeat(50);
        let c = compress(&data, CODEC_BROTLI).unwrap();
        for i in 0..c.len() {
            for bit in [0x01u8, 0x80] {
                let mut bad = c.clone();
                bad[i] ^= bit;
                assert!(decompress(&bad, CODEC_BROTLI).is_err(), "flip at byte {i}");
            }
        }
        assert!(decompress(&c[..c.len() - 1], CODEC_BROTLI).is_err());
    }
}
