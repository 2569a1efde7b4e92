use std::collections::HashMap;

use petwear_core::dataplane::{
    compress, content_id, decode_frame, decompress, encode_frame, gf256, rs_decode, rs_encode, Cluster, FrameReceiver, NodeFault,
    CODEC_BROTLI, CODEC_NONE, DEFAULT_CODEC,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Carry-less multiply followed by reduction modulo 0x11D, bit by bit.
fn schoolbook_mul(a: u8, b: u8) -> u8 {
    let mut product: u16 = 0;
    for i in 0..8 {
        if b >> i & 1 == 1 {
            product ^= (a as u16) << i;
        }
    }
    for bit in (8..16).rev() {
        if product >> bit & 1 == 1 {
            product ^= 0x11D << (bit - 8);
        }
    }
    product as u8
}

#[test]
fn gf256_tables_match_schoolbook_for_all_pairs() {
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            let want = schoolbook_mul(a, b);
            assert_eq!(gf256::mul(a, b), want, "{a} * {b}");
            assert_eq!(gf256::MUL[a as usize][b as usize], want);
        }
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

#[test]
fn every_four_of_six_reconstructs() {
    let mut rng = ChaCha20Rng::seed_from_u64(46);
    let sets = subsets(6, 4);
    assert_eq!(sets.len(), 15);
    for len in [1usize, 3, 4, 5, 1000, 4099] {
        let data: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let chunks = rs_encode(&data, 4, 2).unwrap();
        assert_eq!(chunks.iter().take(4).flat_map(|c| c.bytes.clone()).take(len).collect::<Vec<_>>(), data);
        for set in &sets {
            let picked: Vec<_> = set.iter().map(|&i| chunks[i].clone()).collect();
            assert_eq!(rs_decode(&picked, 4, 2, len).unwrap(), data, "subset {set:?}");
        }
        for set in subsets(6, 3) {
            let picked: Vec<_> = set.iter().map(|&i| chunks[i].clone()).collect();
            assert!(rs_decode(&picked, 4, 2, len).is_err());
        }
    }
}

#[test]
fn other_stripe_shapes() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for (k, m) in [(1, 0), (1, 3), (3, 0), (10, 4), (200, 55)] {
        let data: Vec<u8> = (0..2000).map(|_| rng.random()).collect();
        let chunks = rs_encode(&data, k, m).unwrap();
        let mut idx: Vec<usize> = (0..k + m).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let picked: Vec<_> = idx[..k].iter().map(|&i| chunks[i].clone()).collect();
        assert_eq!(rs_decode(&picked, k, m, data.len()).unwrap(), data, "k={k} m={m}");
    }
}

fn failure_patterns(n: usize, max: usize) -> Vec<Vec<usize>> {
    (0..=max).flat_map(|r| subsets(n, r)).collect()
}

#[test]
fn store_fetch_identity_200_objects() {
    let mut rng = ChaCha20Rng::seed_from_u64(200);
    let cluster = Cluster::in_memory(6);
    let patterns = failure_patterns(6, 2);
    assert_eq!(patterns.len(), 22);
    let mut ids: HashMap<[u8; 32], Vec<u8>> = HashMap::new();
    for n in 0..200 {
        let len = match n {
            0 => 1,
            1 => 1 << 20,
            _ => (2f64.powf(rng.random_range(0.0..20.0)) as usize).clamp(1, 1 << 20),
        };
        let mut data = vec![0u8; len];
        rng.fill_bytes(&mut data);
        let manifest = cluster.store(&data, 4, 2).unwrap();
        // Equal ids must mean equal bytes; identical padding chunks legitimately share one.
        for chunk in rs_encode(&data, 4, 2).unwrap() {
            assert_eq!(content_id(&chunk.bytes), chunk.id);
            assert_eq!(hex::encode(chunk.id), manifest.chunk_ids[chunk.index]);
            let prev = ids.entry(chunk.id).or_insert_with(|| chunk.bytes.clone());
            assert_eq!(*prev, chunk.bytes, "content id collision");
        }
        for down in &patterns {
            cluster.heal_all();
            for &i in down {
                cluster.nodes()[i].set_fault(NodeFault::Down);
            }
            assert_eq!(cluster.fetch(&manifest).unwrap(), data, "object {n}, down {down:?}");
        }
        cluster.heal_all();
    }
}

#[test]
fn corruption_injection() {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let cluster = Cluster::in_memory(6);
    let mut data = vec![0u8; 10_000];
    rng.fill_bytes(&mut data);
    let manifest = cluster.store(&data, 4, 2).unwrap();
    for bad in failure_patterns(6, 2) {
        cluster.heal_all();
        for &i in &bad {
            cluster.nodes()[i].set_fault(NodeFault::Corrupt);
        }
        let out = cluster.fetch_detailed(&manifest).unwrap();
        assert_eq!(out.bytes, data);
        assert!(out.used.iter().all(|&c| !bad.contains(&manifest.placement[c])));
    }
    cluster.heal_all();
    for &i in &[0, 1, 2] {
        cluster.nodes()[i].set_fault(NodeFault::Corrupt);
    }
    assert!(cluster.fetch(&manifest).is_err());
}

#[test]
fn frame_roundtrip_1000_payloads() {
    let mut rng = ChaCha20Rng::seed_from_u64(1000);
    let key: [u8; 32] = rng.random();
    let mut rx = FrameReceiver::new(key);
    for seq in 0..1000u64 {
        let len = rng.random_range(0..2048);
        let mut payload = vec![0u8; len];
        rng.fill_bytes(&mut payload);
        let f = rx.unframe(&encode_frame(&key, CODEC_NONE, seq, &payload).unwrap()).unwrap();
        assert_eq!(f.payload, payload);
        assert_eq!(f.seq, seq);
    }
}

#[test]
fn fuzzed_frames_never_accepted() {
    let mut rng = ChaCha20Rng::seed_from_u64(10_000);
    let key: [u8; 32] = rng.random();
    let mut accepted = 0;
    for i in 0..10_000u64 {
        let mut payload = vec![0u8; rng.random_range(0..256)];
        rng.fill_bytes(&mut payload);
        let original = encode_frame(&key, CODEC_BROTLI, i, &payload).unwrap();
        let mut f = original.clone();
        match i % 4 {
            0 => {
                let at = rng.random_range(0..f.len());
                f[at] ^= 1 << rng.random_range(0..8);
            }
            1 => {
                for _ in 0..rng.random_range(2..9) {
                    let at = rng.random_range(0..f.len());
                    f[at] = rng.random();
                }
            }
            2 => {
                let cut = rng.random_range(0..f.len());
                f.truncate(cut);
            }
            _ => {
                let at = rng.random_range(0..=f.len());
                f.insert(at, rng.random());
            }
        }
        if f == original {
            continue;
        }
        if decode_frame(&key, &f).is_ok() {
            accepted += 1;
        }
    }
    assert_eq!(accepted, 0);
}

#[test]
fn sample_json_compresses_below_half() {
    let fixture = include_bytes!("fixtures/telemetry_sample.jsonl");
    let data: Vec<u8> = fixture.iter().copied().cycle().take(10 * 1024).collect();
    let c = compress(&data, DEFAULT_CODEC).unwrap();
    let ratio = c.len() as f64 / data.len() as f64;
    assert!(ratio < 0.5, "ratio {ratio}");
    assert_eq!(decompress(&c, DEFAULT_CODEC).unwrap(), data);
}
