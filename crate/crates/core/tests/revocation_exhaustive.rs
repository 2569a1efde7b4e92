use std::collections::BTreeSet;

use petwear_core::consent::{unwrap, HolderKeys, RevocationTree};
use petwear_core::telemetry::Category;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Leaves under heap node `node` in a tree of `n` leaves, found by walking
/// every leaf up to the root.
fn subtree_leaves(node: u32, n: u32) -> BTreeSet<u32> {
    (0..n)
        .filter(|&leaf| {
            let mut x = n + leaf;
            while x > node {
                x /= 2;
            }
            x == node
        })
        .collect()
}

/// Every node whose subtree is clean while its parent's is not (or is the root).
fn oracle_cover(n: u32, revoked: &BTreeSet<u32>) -> Vec<u32> {
    let clean = |node: u32| subtree_leaves(node, n).is_disjoint(revoked);
    (1..2 * n).filter(|&node| clean(node) && (node == 1 || !clean(node / 2))).collect()
}

fn tree_with(depth: u32, revoked: &BTreeSet<u32>) -> RevocationTree {
    let mut t = RevocationTree::new(depth, [11u8; 32]).unwrap();
    for &l in revoked {
        t.revoke(l).unwrap();
    }
    t
}

#[test]
fn cover_matches_oracle_for_all_256_sets() {
    let n = 8;
    for mask in 0u32..256 {
        let revoked: BTreeSet<u32> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let cover = tree_with(3, &revoked).compute_cover();
        assert_eq!(cover, oracle_cover(n, &revoked), "R = {revoked:?}");

        let mut seen = BTreeSet::new();
        for &node in &cover {
            let leaves = subtree_leaves(node, n);
            assert!(leaves.is_disjoint(&revoked));
            assert!(seen.is_disjoint(&leaves), "cover subtrees overlap");
            seen.extend(leaves);
        }
        let expected: BTreeSet<u32> = (0..n).filter(|l| !revoked.contains(l)).collect();
        assert_eq!(seen, expected);
    }
}

#[test]
fn cover_size_bound() {
    let n = 8u32;
    for mask in 0u32..256 {
        let r = mask.count_ones();
        if r == 0 || r >= n {
            continue;
        }
        let revoked: BTreeSet<u32> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let size = tree_with(3, &revoked).compute_cover().len() as f64;
        let bound = r as f64 * (n as f64 / r as f64).log2();
        assert!(size <= bound + 1e-9, "R = {revoked:?}: {size} > {bound}");
    }
}

fn revocation_sets_up_to_two(n: u32) -> Vec<BTreeSet<u32>> {
    let mut sets = vec![BTreeSet::new()];
    for a in 0..n {
        sets.push([a].into());
        for b in a + 1..n {
            sets.push([a, b].into());
        }
    }
    sets
}

#[test]
fn unwrap_exhaustive_n16() {
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let sets = revocation_sets_up_to_two(16);
    assert_eq!(sets.len(), 137);
    for revoked in sets {
        let mut t = tree_with(4, &revoked);
        let data_key = [revoked.len() as u8 + 1; 32];
        let env = t.rotate_epoch_and_wrap(Category::Glucose, &data_key, &mut rng);
        let grant = t.grant(Category::Glucose);
        for leaf in 0..16 {
            let holder = t.holder_keys(leaf).unwrap();
            let result = unwrap(&env, &holder, &grant);
            if revoked.contains(&leaf) {
                assert!(result.is_err(), "revoked leaf {leaf} opened, R = {revoked:?}");
                // Present each held key under every wrap's node id: still nothing opens.
                for wrap in &env.wraps {
                    for (_, key) in &holder.keys {
                        let forged = HolderKeys { leaf, keys: vec![(wrap.node, *key)] };
                        assert!(unwrap(&env, &forged, &grant).is_err());
                    }
                }
            } else {
                assert_eq!(result.unwrap(), data_key, "leaf {leaf}, R = {revoked:?}");
            }
        }
    }
}
