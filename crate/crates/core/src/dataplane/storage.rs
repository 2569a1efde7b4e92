//! Content-addressed chunk storage over simulated nodes.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::rs::{content_id, rs_decode, rs_encode, Chunk};
use super::DataplaneError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum NodeFault {
    #[default]
    Healthy,
    Down,
    /// Returns chunk bytes with one bit flipped.
    Corrupt,
    Slow { delay_ms: u64 },
}

enum Backing {
    Memory(HashMap<[u8; 32], Vec<u8>>),
    Dir(PathBuf),
}

/// One simulated storage node. Writes to a node are serialized by its lock.
pub struct StorageNode {
    id: usize,
    fault: Mutex<NodeFault>,
    backing: Mutex<Backing>,
}

impl StorageNode {
    pub fn in_memory(id: usize) -> Self {
        StorageNode { id, fault: Mutex::new(NodeFault::Healthy), backing: Mutex::new(Backing::Memory(HashMap::new())) }
    }

    /// Chunks are files named by their hex content id inside `dir`.
    pub fn in_dir(id: usize, dir: impl Into<PathBuf>) -> Result<Self, DataplaneError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(StorageNode { id, fault: Mutex::new(NodeFault::Healthy), backing: Mutex::new(Backing::Dir(dir)) })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn fault(&self) -> NodeFault {
        *self.fault.lock().expect("fault lock poisoned")
    }

    pub fn set_fault(&self, fault: NodeFault) {
        *self.fault.lock().expect("fault lock poisoned") = fault;
    }

    pub fn is_live(&self) -> bool {
        self.fault() != NodeFault::Down
    }

    pub fn put(&self, id: &[u8; 32], bytes: &[u8]) -> Result<(), DataplaneError> {
        if !self.is_live() {
            return Err(DataplaneError::NodeDown(self.id));
        }
        match &mut *self.backing.lock().expect("node lock poisoned") {
            Backing::Memory(map) => {
                map.insert(*id, bytes.to_vec());
            }
            Backing::Dir(dir) => {
                let path = dir.join(hex::encode(id));
                let tmp = path.with_extension("tmp");
                std::fs::write(&tmp, bytes)?;
                std::fs::rename(&tmp, &path)?;
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &[u8; 32]) -> Result<Vec<u8>, DataplaneError> {
        let fault = self.fault();
        match fault {
            NodeFault::Down => return Err(DataplaneError::NodeDown(self.id)),
            NodeFault::Slow { delay_ms } => std::thread::sleep(Duration::from_millis(delay_ms)),
            NodeFault::Healthy | NodeFault::Corrupt => {}
        }
        let mut bytes = match &*self.backing.lock().expect("node lock poisoned") {
            Backing::Memory(map) => map.get(id).cloned().ok_or(DataplaneError::MissingChunk(self.id))?,
            Backing::Dir(dir) => match std::fs::read(dir.join(hex::encode(id))) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(DataplaneError::MissingChunk(self.id)),
                Err(e) => return Err(e.into()),
            },
        };
        if fault == NodeFault::Corrupt {
            match bytes.first_mut() {
                Some(b) => *b ^= 0x01,
                None => bytes.push(0),
            }
        }
        Ok(bytes)
    }

    pub fn chunk_count(&self) -> usize {
        match &*self.backing.lock().expect("node lock poisoned") {
            Backing::Memory(map) => map.len(),
            Backing::Dir(dir) => std::fs::read_dir(dir)
                .map(|it| it.filter_map(Result::ok).filter(|e| e.path().extension().is_none()).count())
                .unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub object_id: String,
    pub k: usize,
    pub m: usize,
    pub chunk_ids: Vec<String>,
    /// `placement[i]` is the node holding chunk `i`.
    pub placement: Vec<usize>,
    pub length: usize,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), DataplaneError> {
        super::rs::check_params(self.k, self.m)?;
        if self.chunk_ids.len() != self.k + self.m || self.placement.len() != self.k + self.m {
            return Err(DataplaneError::Params("manifest chunk count must equal k + m".into()));
        }
        Ok(())
    }

    fn chunk_id(&self, i: usize) -> Result<[u8; 32], DataplaneError> {
        hex::decode(&self.chunk_ids[i])
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| DataplaneError::Params(format!("bad chunk id {}", self.chunk_ids[i])))
    }
}

/// What a fetch saw on the way to the bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOutcome {
    pub bytes: Vec<u8>,
    pub used: Vec<usize>,
    pub corrupt_nodes: Vec<usize>,
    pub failed_nodes: Vec<usize>,
}

pub struct Cluster {
    nodes: Vec<Arc<StorageNode>>,
    cursor: AtomicUsize,
}

impl Cluster {
    pub fn in_memory(count: usize) -> Self {
        Cluster::from_nodes((0..count).map(StorageNode::in_memory).collect())
    }

    pub fn in_dir(count: usize, root: &Path) -> Result<Self, DataplaneError> {
        let nodes = (0..count).map(|i| StorageNode::in_dir(i, root.join(format!("node-{i:02}")))).collect::<Result<_, _>>()?;
        Ok(Cluster::from_nodes(nodes))
    }

    pub fn from_nodes(nodes: Vec<StorageNode>) -> Self {
        Cluster { nodes: nodes.into_iter().map(Arc::new).collect(), cursor: AtomicUsize::new(0) }
    }

    pub fn nodes(&self) -> &[Arc<StorageNode>] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Option<&Arc<StorageNode>> {
        self.nodes.get(id)
    }

    pub fn heal_all(&self) {
        self.nodes.iter().for_each(|n| n.set_fault(NodeFault::Healthy));
    }

    /// Encode and place one chunk per node, round-robin from a rotating start.
    pub fn store(&self, bytes: &[u8], k: usize, m: usize) -> Result<Manifest, DataplaneError> {
        let n = self.nodes.len();
        if n < k + m {
            return Err(DataplaneError::Params(format!("{n} nodes cannot hold {} distinct chunks", k + m)));
        }
        let chunks = rs_encode(bytes, k, m)?;
        let start = self.cursor.fetch_add(1, Ordering::Relaxed) % n;
        let placement: Vec<usize> = (0..k + m).map(|i| (start + i) % n).collect();
        for (chunk, &node) in chunks.iter().zip(&placement) {
            self.nodes[node].put(&chunk.id, &chunk.bytes)?;
        }
        Ok(Manifest {
            object_id: hex::encode(content_id(bytes)),
            k,
            m,
            chunk_ids: chunks.iter().map(Chunk::hex_id).collect(),
            placement,
            length: bytes.len(),
        })
    }

    pub fn fetch(&self, manifest: &Manifest) -> Result<Vec<u8>, DataplaneError> {
        self.fetch_detailed(manifest).map(|o| o.bytes)
    }

    /// Read every chunk concurrently and decode as soon as `k` chunks whose
    /// content ids check out have arrived; slower reads are abandoned.
    pub fn fetch_detailed(&self, manifest: &Manifest) -> Result<FetchOutcome, DataplaneError> {
        manifest.validate()?;
        let total = manifest.k + manifest.m;
        let ids: Vec<[u8; 32]> = (0..total).map(|i| manifest.chunk_id(i)).collect::<Result<_, _>>()?;
        let (tx, rx) = mpsc::channel();
        for (i, id) in ids.iter().enumerate() {
            let node_id = manifest.placement[i];
            let Some(node) = self.nodes.get(node_id).cloned() else {
                tx.send((i, node_id, Err(DataplaneError::NodeDown(node_id)))).ok();
                continue;
            };
            let tx = tx.clone();
            let id = *id;
            std::thread::spawn(move || {
                tx.send((i, node_id, node.get(&id))).ok();
            });
        }
        drop(tx);

        let mut good = Vec::with_capacity(manifest.k);
        let mut corrupt = BTreeSet::new();
        let mut failed = BTreeSet::new();
        for (i, node_id, result) in rx.iter() {
            match result {
                Ok(bytes) if content_id(&bytes) == ids[i] => good.push(Chunk { id: ids[i], index: i, bytes }),
                Ok(_) => {
                    corrupt.insert(node_id);
                }
                Err(_) => {
                    failed.insert(node_id);
                }
            }
            if good.len() == manifest.k {
                break;
            }
        }
        if good.len() < manifest.k {
            if !corrupt.is_empty() {
                return Err(DataplaneError::Corruption { nodes: corrupt.into_iter().collect() });
            }
            let have: BTreeSet<usize> = good.iter().map(|c| c.index).collect();
            let missing = (0..total).filter(|i| !have.contains(i)).collect();
            return Err(DataplaneError::Unrecoverable { missing, needed: manifest.k, available: have.len() });
        }
        good.sort_by_key(|c| c.index);
        let bytes = rs_decode(&good, manifest.k, manifest.m, manifest.length)?;
        if hex::encode(content_id(&bytes)) != manifest.object_id {
            return Err(DataplaneError::Corruption { nodes: Vec::new() });
        }
        Ok(FetchOutcome {
            bytes,
            used: good.iter().map(|c| c.index).collect(),
            corrupt_nodes: corrupt.into_iter().collect(),
            failed_nodes: failed.into_iter().collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn object() -> Vec<u8> {
        (0..5000u32).map(|i| (i * 31 % 251) as u8).collect()
    }

    #[test]
    fn kill_any_two_of_six() {
        let cluster = Cluster::in_memory(6);
        let data = object();
        let manifest = cluster.store(&data, 4, 2).unwrap();
        for a in 0..6 {
            for b in a + 1..6 {
                cluster.heal_all();
                cluster.nodes()[a].set_fault(NodeFault::Down);
                cluster.nodes()[b].set_fault(NodeFault::Down);
                assert_eq!(cluster.fetch(&manifest).unwrap(), data, "killed {a},{b}");
            }
        }
    }

    #[test]
    fn kill_three_is_unrecoverable() {
        let cluster = Cluster::in_memory(6);
        let manifest = cluster.store(&object(), 4, 2).unwrap();
        for n in &cluster.nodes()[..3] {
            n.set_fault(NodeFault::Down);
        }
        assert!(matches!(cluster.fetch(&manifest), Err(DataplaneError::Unrecoverable { available: 3, .. })));
    }

    #[test]
    fn corrupt_node_named_and_bypassed() {
        let cluster = Cluster::in_memory(6);
        let data = object();
        let manifest = cluster.store(&data, 4, 2).unwrap();
        let victim = manifest.placement[1];
        cluster.nodes()[victim].set_fault(NodeFault::Corrupt);
        cluster.nodes()[manifest.placement[4]].set_fault(NodeFault::Slow { delay_ms: 50 });
        let out = cluster.fetch_detailed(&manifest).unwrap();
        assert_eq!(out.bytes, data);
        assert!(!out.used.contains(&1));

        cluster.heal_all();
        for i in [0, 1, 2] {
            cluster.nodes()[manifest.placement[i]].set_fault(NodeFault::Corrupt);
        }
        match cluster.fetch(&manifest) {
            Err(DataplaneError::Corruption { nodes }) => {
                let mut want: Vec<usize> = [0, 1, 2].iter().map(|&i| manifest.placement[i]).collect();
                want.sort();
                assert_eq!(nodes, want);
            }
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn round_robin_and_too_few_nodes() {
        let cluster = Cluster::in_memory(7);
        let a = cluster.store(b"a", 4, 2).unwrap();
        let b = cluster.store(b"b", 4, 2).unwrap();
        assert_eq!(a.placement, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(b.placement, vec![1, 2, 3, 4, 5, 6]);
        assert!(Cluster::in_memory(5).store(b"x", 4, 2).is_err());
    }

    #[test]
    fn chunk_files_named_by_content_id() {
        let dir = tempfile::tempdir().unwrap();
        let cluster = Cluster::in_dir(6, dir.path()).unwrap();
        let data = object();
        let manifest = cluster.store(&data, 4, 2).unwrap();
        for (i, id) in manifest.chunk_ids.iter().enumerate() {
            let path = dir.path().join(format!("node-{:02}", manifest.placement[i])).join(id);
            let bytes = std::fs::read(path).unwrap();
            assert_eq!(hex::encode(content_id(&bytes)), *id);
        }
        assert_eq!(cluster.fetch(&manifest).unwrap(), data);
        let json = serde_json::to_string(&manifest).unwrap();
        assert_eq!(serde_json::from_str::<Manifest>(&json).unwrap(), manifest);
    }
}
