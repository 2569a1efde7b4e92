//! Transmission and storage path: compression, authenticated frames,
//! Reed-Solomon striping and content-addressed chunk placement.

mod compress;
mod frame;
pub mod gf256;
mod rs;
mod storage;

use thiserror::Error;

pub use compress::{compress, decompress, CODEC_BROTLI, CODEC_NONE, DEFAULT_CODEC};
pub use frame::{decode_frame, encode_frame, Frame, FrameReceiver, FrameSender, FRAME_HEADER_LEN, FRAME_MAGIC, FRAME_VERSION, TAG_LEN};
pub use rs::{check_params, content_id, generator, rs_decode, rs_encode, shard_len, Chunk, MAX_CHUNKS};
pub use storage::{Cluster, FetchOutcome, Manifest, NodeFault, StorageNode};

pub const DEFAULT_K: usize = 4;
pub const DEFAULT_M: usize = 2;

#[derive(Debug, Error)]
pub enum DataplaneError {
    #[error("unknown codec id {0}")]
    UnknownCodec(u8),
    #[error("codec error: {0}")]
    Codec(String),
    #[error("frame authentication failed")]
    Integrity,
    #[error("replayed or reordered frame: seq {seq} after {last}")]
    Replay { seq: u64, last: u64 },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unrecoverable: {available} of {needed} chunks available, missing {missing:?}")]
    Unrecoverable { missing: Vec<usize>, needed: usize, available: usize },
    #[error("corrupt chunks returned by nodes {nodes:?}")]
    Corruption { nodes: Vec<usize> },
    #[error("node {0} is down")]
    NodeDown(usize),
    #[error("node {0} does not hold the chunk")]
    MissingChunk(usize),
    #[error("storage I/O: {0}")]
    Io(#[from] std::io::Error),
}
