use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::encoding::{block_hash, decode_event, encode_event, encode_record, read_record, FILE_MAGIC, FILE_VERSION, HEADER_LEN};
use super::{AuditBlock, AuditEvent, EventKind, LedgerError};

pub type Observer = Box<dyn Fn(&AuditBlock) + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainStatus {
    Intact { blocks: u64 },
    Broken { index: u64, reason: String },
}

impl ChainStatus {
    pub fn is_intact(&self) -> bool {
        matches!(self, ChainStatus::Intact { .. })
    }
}

/// Recompute every link. Reports the first block whose hash, linkage,
/// index or content fails.
pub fn verify_chain(blocks: &[AuditBlock]) -> ChainStatus {
    let mut prev = [0u8; 32];
    for (i, b) in blocks.iter().enumerate() {
        let i = i as u64;
        let broken = |reason: &str| ChainStatus::Broken { index: i, reason: reason.to_string() };
        if b.index != i {
            return broken("index out of sequence");
        }
        if b.prev_hash != prev {
            return broken("prev_hash does not match the previous block");
        }
        if b.event.validate().is_err() {
            return broken("event fails validation");
        }
        if block_hash(i, &prev, &encode_event(&b.event)) != b.block_hash {
            return broken("block hash mismatch");
        }
        prev = b.block_hash;
    }
    ChainStatus::Intact { blocks: blocks.len() as u64 }
}

fn parse_file(bytes: &[u8]) -> (Vec<AuditBlock>, ChainStatus) {
    let mut blocks = Vec::new();
    if bytes.len() < HEADER_LEN || &bytes[..4] != FILE_MAGIC || bytes[4] != FILE_VERSION {
        return (blocks, ChainStatus::Broken { index: 0, reason: "bad file header".into() });
    }
    let mut pos = HEADER_LEN;
    let mut prev = [0u8; 32];
    while pos < bytes.len() {
        let i = blocks.len() as u64;
        let broken = |reason: String| ChainStatus::Broken { index: i, reason };
        let (rec, next) = match read_record(bytes, pos) {
            Ok(r) => r,
            Err(e) => return (blocks, broken(e)),
        };
        if rec.index != i {
            return (blocks, broken("index out of sequence".into()));
        }
        if rec.prev_hash != prev {
            return (blocks, broken("prev_hash does not match the previous block".into()));
        }
        if block_hash(i, &prev, rec.event_bytes) != rec.block_hash {
            return (blocks, broken("block hash mismatch".into()));
        }
        let event = match decode_event(rec.event_bytes) {
            Ok(e) => e,
            Err(e) => return (blocks, broken(e)),
        };
        if let Err(e) = event.validate() {
            return (blocks, broken(e.to_string()));
        }
        prev = rec.block_hash;
        blocks.push(AuditBlock { index: i, prev_hash: rec.prev_hash, block_hash: rec.block_hash, event });
        pos = next;
    }
    let n = blocks.len() as u64;
    (blocks, ChainStatus::Intact { blocks: n })
}

/// Verify a complete ledger file image.
pub fn verify_bytes(bytes: &[u8]) -> ChainStatus {
    parse_file(bytes).1
}

pub fn verify_file(path: &Path) -> Result<ChainStatus, LedgerError> {
    Ok(verify_bytes(&std::fs::read(path)?))
}

/// Conjunction of optional clauses; `from`/`to` bound the timestamp inclusively.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    pub user_id: Option<String>,
    pub kind: Option<EventKind>,
    pub request_id: Option<String>,
    pub from: Option<i64>,
    pub to: Option<i64>,
}

impl Filter {
    pub fn matches(&self, e: &AuditEvent) -> bool {
        self.user_id.as_ref().is_none_or(|u| *u == e.user_id)
            && self.kind.is_none_or(|k| k == e.kind)
            && self.request_id.as_ref().is_none_or(|r| e.request_id.as_ref() == Some(r))
            && self.from.is_none_or(|t| e.timestamp >= t)
            && self.to.is_none_or(|t| e.timestamp <= t)
    }
}

struct State {
    blocks: Vec<AuditBlock>,
    file: Option<(File, u64)>,
}

/// Single-writer ledger. Appends are serialized; readers get a consistent prefix.
pub struct Ledger {
    state: RwLock<State>,
    path: Option<PathBuf>,
    observers: Mutex<Vec<Observer>>,
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger { state: RwLock::new(State { blocks: Vec::new(), file: None }), path: None, observers: Mutex::default() }
    }

    /// Open or create a ledger file. An existing file must verify completely.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let existing = std::fs::read(path)?;
        let blocks = if existing.is_empty() {
            let mut header = FILE_MAGIC.to_vec();
            header.push(FILE_VERSION);
            file.write_all(&header)?;
            file.sync_all()?;
            Vec::new()
        } else {
            match parse_file(&existing) {
                (blocks, ChainStatus::Intact { .. }) => blocks,
                (_, ChainStatus::Broken { index, reason }) => return Err(LedgerError::Corrupt { index, reason }),
            }
        };
        let len = file.metadata()?.len();
        Ok(Ledger {
            state: RwLock::new(State { blocks, file: Some((file, len)) }),
            path: Some(path.to_path_buf()),
            observers: Mutex::default(),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Validate, link, persist (fsync) and only then acknowledge.
    pub fn append(&self, event: AuditEvent) -> Result<AuditBlock, LedgerError> {
        event.validate()?;
        let block = {
            let mut st = self.state.write().expect("ledger lock poisoned");
            let index = st.blocks.len() as u64;
            let prev_hash = st.blocks.last().map_or([0u8; 32], |b| b.block_hash);
            let hash = block_hash(index, &prev_hash, &encode_event(&event));
            let block = AuditBlock { index, prev_hash, block_hash: hash, event };
            if let Some((file, len)) = st.file.as_mut() {
                let record = encode_record(&block);
                let res = file.write_all(&record).and_then(|_| file.sync_data());
                if let Err(e) = res {
                    let _ = file.set_len(*len);
                    return Err(e.into());
                }
                *len += record.len() as u64;
            }
            st.blocks.push(block.clone());
            block
        };
        for obs in self.observers.lock().expect("observer lock poisoned").iter() {
            obs(&block);
        }
        Ok(block)
    }

    pub fn len(&self) -> u64 {
        self.state.read().expect("ledger lock poisoned").blocks.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<AuditBlock> {
        self.state.read().expect("ledger lock poisoned").blocks.clone()
    }

    pub fn verify(&self) -> ChainStatus {
        verify_chain(&self.state.read().expect("ledger lock poisoned").blocks)
    }

    /// Matching blocks in index order.
    pub fn query(&self, filter: &Filter) -> Vec<AuditBlock> {
        let st = self.state.read().expect("ledger lock poisoned");
        st.blocks.iter().filter(|b| filter.matches(&b.event)).cloned().collect()
    }

    /// Called synchronously after every successful append.
    pub fn subscribe(&self, observer: Observer) {
        self.observers.lock().expect("observer lock poisoned").push(observer);
    }
}
