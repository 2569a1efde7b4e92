//! Complete-subtree revocation over a binary tree of `N = 2^d` leaves.
//!
//! Nodes use heap numbering: the root is 1, the children of `i` are `2i` and
//! `2i + 1`, and leaf `j` (0-based) is node `N + j`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CategoryGrant, ConsentError};
use crate::crypto::{hmac, Key};
use crate::telemetry::Category;

pub const MAX_DEPTH: u32 = 24;

/// The path keys given to one leaf: exactly `d + 1` of them, leaf to root.
#[derive(Clone, Serialize, Deserialize)]
pub struct HolderKeys {
    pub leaf: u32,
    pub keys: Vec<(u32, Key)>,
}

impl std::fmt::Debug for HolderKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let nodes: Vec<u32> = self.keys.iter().map(|(n, _)| *n).collect();
        f.debug_struct("HolderKeys").field("leaf", &self.leaf).field("nodes", &nodes).finish()
    }
}

pub struct RevocationTree {
    depth: u32,
    revoked: BTreeSet<u32>,
    epoch: u64,
    master: Key,
}

impl RevocationTree {
    pub fn new(depth: u32, master: Key) -> Result<Self, ConsentError> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(ConsentError::InvalidRequest(format!("tree depth must be in 1..={MAX_DEPTH}")));
        }
        Ok(RevocationTree { depth, revoked: BTreeSet::new(), epoch: 0, master })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn leaves(&self) -> u32 {
        1 << self.depth
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn revoked(&self) -> &BTreeSet<u32> {
        &self.revoked
    }

    pub fn leaf_node(&self, leaf: u32) -> u32 {
        self.leaves() + leaf
    }

    fn check_leaf(&self, leaf: u32) -> Result<(), ConsentError> {
        if leaf >= self.leaves() {
            return Err(ConsentError::LeafOutOfRange { leaf, leaves: self.leaves() });
        }
        Ok(())
    }

    pub(crate) fn node_key(&self, node: u32) -> Key {
        hmac(&self.master, &[b"node", &node.to_le_bytes()])
    }

    pub fn holder_keys(&self, leaf: u32) -> Result<HolderKeys, ConsentError> {
        self.check_leaf(leaf)?;
        let mut node = self.leaf_node(leaf);
        let mut keys = Vec::with_capacity(self.depth as usize + 1);
        while node >= 1 {
            keys.push((node, self.node_key(node)));
            node /= 2;
        }
        Ok(HolderKeys { leaf, keys })
    }

    pub fn grant(&self, category: Category) -> CategoryGrant {
        CategoryGrant { category, key: hmac(&self.master, &[b"grant", &[category.code()]]) }
    }

    /// Revoke a leaf. Returns whether anything changed; a change bumps the epoch.
    pub fn revoke(&mut self, leaf: u32) -> Result<bool, ConsentError> {
        self.check_leaf(leaf)?;
        let changed = self.revoked.insert(leaf);
        if changed {
            self.epoch += 1;
        }
        Ok(changed)
    }

    pub fn restore(&mut self, leaf: u32) -> Result<bool, ConsentError> {
        self.check_leaf(leaf)?;
        let changed = self.revoked.remove(&leaf);
        if changed {
            self.epoch += 1;
        }
        Ok(changed)
    }

    /// Maximal subtrees that contain no revoked leaf, as sorted node ids.
    pub fn compute_cover(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.cover_from(1, 0, self.leaves(), &mut out);
        out.sort_unstable();
        out
    }

    fn cover_from(&self, node: u32, lo: u32, hi: u32, out: &mut Vec<u32>) {
        if self.revoked.range(lo..hi).next().is_none() {
            out.push(node);
            return;
        }
        if hi - lo == 1 {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        self.cover_from(2 * node, lo, mid, out);
        self.cover_from(2 * node + 1, mid, hi, out);
    }

    pub(crate) fn bump_epoch(&mut self) -> u64 {
        self.epoch += 1;
        self.epoch
    }
}
