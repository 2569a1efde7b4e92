//! Per-packet device-to-storage path:
//! smooth, fixed-point encode, encrypt, serialize, compress, frame, verify the
//! frame on the gateway side, then erasure-code and store.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use petwear_core::dataplane::{compress, decompress, Cluster, FrameReceiver, FrameSender, Manifest};
use petwear_core::he::HeContext;
use petwear_core::telemetry::{
    Category, Metric, Sample, ScalarKalman, DEFAULT_MEASUREMENT_VARIANCE, DEFAULT_PROCESS_VARIANCE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use zeroize::Zeroize;

use crate::config::StripeConfig;
use crate::error::{GatewayError, Result};
use crate::keyservice::KeyService;

/// Readings are stored as integers in hundredths.
pub const FIXED_POINT_SCALE: f64 = 100.0;

/// Up to one ciphertext worth of consecutive readings of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub device_id: String,
    pub user_id: String,
    pub metric: Metric,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl Packet {
    pub fn category(&self) -> Category {
        self.metric.category()
    }
}

/// Cut a device stream into packets of at most `slots` readings per metric.
/// Packets come out ordered by the timestamp of their last reading.
pub fn packetize(samples: &[Sample], slots: usize) -> Vec<Packet> {
    let mut open: BTreeMap<(String, Metric), Packet> = BTreeMap::new();
    let mut out = Vec::new();
    for s in samples {
        let key = (s.device_id.clone(), s.metric);
        let p = open.entry(key.clone()).or_insert_with(|| Packet {
            device_id: s.device_id.clone(),
            user_id: s.user_id.clone(),
            metric: s.metric,
            timestamps: Vec::with_capacity(slots),
            values: Vec::with_capacity(slots),
        });
        p.timestamps.push(s.timestamp_ms);
        p.values.push(s.value);
        if p.values.len() == slots {
            out.push(open.remove(&key).expect("present"));
        }
    }
    let mut rest: Vec<Packet> = open.into_values().collect();
    rest.sort_by_key(|p| (p.timestamps.last().copied(), p.metric));
    out.extend(rest);
    out
}

/// Stored-packet index entry. Holds no reading values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub device_id: String,
    pub user_id: String,
    pub metric: Metric,
    pub category: Category,
    pub seq: u64,
    pub epoch: u64,
    pub codec: u8,
    pub count: usize,
    pub first_ms: i64,
    pub last_ms: i64,
    pub ciphertext_bytes: usize,
    pub compressed_bytes: usize,
    pub frame_bytes: usize,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub normalize: Duration,
    pub encrypt: Duration,
    pub frame: Duration,
    pub store: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.normalize + self.encrypt + self.frame + self.store
    }
}

/// Both ends of one device session plus the device-side filters.
pub struct DeviceChannel {
    pub device_id: String,
    pub user_id: String,
    filters: BTreeMap<Metric, ScalarKalman>,
    sender: FrameSender,
    receiver: FrameReceiver,
    rng: ChaCha20Rng,
}

impl DeviceChannel {
    pub fn new(device_id: &str, user_id: &str, keys: &KeyService, seed: u64) -> Self {
        let session = keys.session_key(device_id);
        let rng_seed = petwear_core::crypto::hmac(&seed.to_le_bytes(), &[b"device-rng", device_id.as_bytes()]);
        DeviceChannel {
            device_id: device_id.to_string(),
            user_id: user_id.to_string(),
            filters: BTreeMap::new(),
            sender: FrameSender::new(session),
            receiver: FrameReceiver::new(session),
            rng: ChaCha20Rng::from_seed(rng_seed),
        }
    }

    /// Smooth and convert to fixed point, clamped to the metric's range.
    fn normalize(&mut self, packet: &Packet, modulus: u64) -> Result<Vec<u64>> {
        let filter = match self.filters.entry(packet.metric) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(ScalarKalman::new(DEFAULT_PROCESS_VARIANCE, DEFAULT_MEASUREMENT_VARIANCE)?)
            }
        };
        let (lo, hi) = packet.metric.range();
        if (hi * FIXED_POINT_SCALE).round() >= modulus as f64 {
            return Err(GatewayError::Config(format!(
                "{} range does not fit plaintext modulus {modulus}",
                packet.metric.as_str()
            )));
        }
        packet
            .values
            .iter()
            .map(|&v| {
                if !v.is_finite() {
                    return Err(GatewayError::Config(format!("non-finite {} reading", packet.metric.as_str())));
                }
                let smoothed = filter.update(v).clamp(lo, hi);
                Ok((smoothed * FIXED_POINT_SCALE).round() as u64)
            })
            .collect()
    }

    /// Run one packet through the whole path. Returns the index record, the
    /// frame as sent by the device, and per-stage timings.
    pub fn process(
        &mut self,
        ctx: &HeContext,
        keys: &Mutex<KeyService>,
        cluster: &Cluster,
        packet: &Packet,
        codec: u8,
        stripe: StripeConfig,
    ) -> Result<(PacketRecord, Vec<u8>, StageTimings)> {
        let dev = self.device_id.clone();
        let mut t = StageTimings::default();
        if packet.values.is_empty() || packet.values.len() > ctx.slots() || packet.values.len() != packet.timestamps.len() {
            return Err(GatewayError::Config(format!("packet of {} readings", packet.values.len())).at("normalize", dev));
        }

        let start = Instant::now();
        let mut fixed = self.normalize(packet, ctx.plaintext_modulus()).map_err(|e| e.at("normalize", &dev))?;
        t.normalize = start.elapsed();

        let start = Instant::now();
        let (epoch, pk) = keys
            .lock()
            .expect("key service lock")
            .public_key(&packet.user_id, packet.category())
            .map_err(|e| e.at("encrypt", &dev))?;
        let pt = ctx.encode(&fixed).map_err(|e| GatewayError::from(e).at("encrypt", &dev))?;
        fixed.zeroize();
        let ct = ctx.encrypt(&pk, &pt, &mut self.rng);
        drop(pt);
        let ct_bytes = ctx.serialize_ciphertext(&ct);
        t.encrypt = start.elapsed();

        let start = Instant::now();
        let compressed = compress(&ct_bytes, codec).map_err(|e| GatewayError::from(e).at("frame", &dev))?;
        let frame = self.sender.frame(codec, &compressed).map_err(|e| GatewayError::from(e).at("frame", &dev))?;
        let received = self.receiver.unframe(&frame).map_err(|e| GatewayError::from(e).at("frame", &dev))?;
        // The stored object is the decompressed, re-validated ciphertext.
        let body = decompress(&received.payload, received.codec).map_err(|e| GatewayError::from(e).at("frame", &dev))?;
        ctx.deserialize_ciphertext(&body).map_err(|e| GatewayError::from(e).at("frame", &dev))?;
        t.frame = start.elapsed();

        let start = Instant::now();
        let manifest = cluster
            .store(&received.payload, stripe.k, stripe.m)
            .map_err(|e| GatewayError::from(e).at("store", &dev))?;
        t.store = start.elapsed();

        let record = PacketRecord {
            device_id: self.device_id.clone(),
            user_id: packet.user_id.clone(),
            metric: packet.metric,
            category: packet.category(),
            seq: received.seq,
            epoch,
            codec: received.codec,
            count: packet.values.len(),
            first_ms: packet.timestamps[0],
            last_ms: *packet.timestamps.last().expect("non-empty"),
            ciphertext_bytes: ct_bytes.len(),
            compressed_bytes: compressed.len(),
            frame_bytes: frame.len(),
            manifest,
        };
        Ok((record, frame, t))
    }
}

/// Per-device channels, each behind its own lock so devices run in parallel.
#[derive(Default)]
pub struct Channels(Mutex<BTreeMap<String, Arc<Mutex<DeviceChannel>>>>);

impl Channels {
    pub fn get_or_open(&self, device_id: &str, user_id: &str, keys: &Mutex<KeyService>, seed: u64) -> Result<Arc<Mutex<DeviceChannel>>> {
        let mut map = self.0.lock().expect("channel map lock");
        if let Some(c) = map.get(device_id) {
            let owner = c.lock().expect("channel lock").user_id.clone();
            if owner != user_id {
                return Err(GatewayError::Config(format!("device {device_id} belongs to {owner}, not {user_id}")));
            }
            return Ok(Arc::clone(c));
        }
        let ch = DeviceChannel::new(device_id, user_id, &keys.lock().expect("key service lock"), seed);
        let ch = Arc::new(Mutex::new(ch));
        map.insert(device_id.to_string(), Arc::clone(&ch));
        Ok(ch)
    }
}
