//! Shared gateway state: consent, keys, storage, the audit ledger and the
//! event stream the HTTP layer serves.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use petwear_core::consent::{ConsentPolicy, ConsentStore, NewRequest, RequestState, TransferRequest};
use petwear_core::dataplane::Cluster;
use petwear_core::dp::PrivacyBudget;
use petwear_core::he::HeContext;
use petwear_core::ledger::{AuditBlock, AuditEvent, Decision, EventKind, Filter, Ledger};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;

use crate::config::ScenarioConfig;
use crate::error::{GatewayError, Result};
use crate::keyservice::KeyService;
use crate::pipeline::{Channels, Packet, PacketRecord, StageTimings};

const EVENT_BUFFER: usize = 1024;

pub enum Clock {
    System,
    /// Milliseconds, advanced explicitly. Keeps scenario runs reproducible.
    Simulated(AtomicI64),
}

impl Clock {
    pub fn simulated(start_ms: i64) -> Self {
        Clock::Simulated(AtomicI64::new(start_ms))
    }

    pub fn now(&self) -> i64 {
        match self {
            Clock::System => SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as i64).unwrap_or(0),
            Clock::Simulated(t) => t.load(Ordering::SeqCst),
        }
    }

    /// Move a simulated clock forward; no effect on the system clock.
    pub fn advance(&self, ms: i64) {
        if let Clock::Simulated(t) = self {
            t.fetch_add(ms, Ordering::SeqCst);
        }
    }

    pub fn set(&self, ms: i64) {
        if let Clock::Simulated(t) = self {
            t.store(ms, Ordering::SeqCst);
        }
    }
}

/// Server-sent notification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatewayEvent {
    pub event: String,
    pub data: Value,
}

#[derive(Default)]
struct Counters {
    packets: AtomicU64,
    samples: AtomicU64,
    ciphertext_bytes: AtomicU64,
    compressed_bytes: AtomicU64,
    frame_bytes: AtomicU64,
    ingest_errors: AtomicU64,
    releases: AtomicU64,
    release_errors: AtomicU64,
    ingest_micros: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSnapshot {
    pub packets_ingested: u64,
    pub samples_ingested: u64,
    pub ciphertext_bytes: u64,
    pub compressed_bytes: u64,
    pub frame_bytes: u64,
    pub ingest_errors: u64,
    pub mean_ingest_ms: f64,
    pub releases: u64,
    pub release_errors: u64,
    pub key_unwraps: u64,
    pub requests_total: usize,
    pub requests_pending: usize,
    pub ledger_blocks: u64,
    pub ledger_intact: bool,
    pub storage_nodes_live: usize,
    pub storage_nodes: usize,
}

pub struct Gateway {
    pub(crate) config: ScenarioConfig,
    pub(crate) ctx: Arc<HeContext>,
    pub(crate) ledger: Arc<Ledger>,
    pub(crate) consent: ConsentStore,
    pub(crate) keys: Mutex<KeyService>,
    pub(crate) cluster: Cluster,
    pub(crate) packets: RwLock<Vec<PacketRecord>>,
    pub(crate) budgets: Mutex<BTreeMap<String, PrivacyBudget>>,
    pub(crate) dp_rng: Mutex<ChaCha20Rng>,
    channels: Channels,
    events: broadcast::Sender<GatewayEvent>,
    clock: Clock,
    counters: Counters,
}

impl Gateway {
    pub fn new(config: ScenarioConfig, ledger: Ledger, cluster: Cluster, clock: Clock) -> Result<Arc<Self>> {
        config.validate()?;
        if cluster.nodes().len() < config.stripe.k + config.stripe.m {
            return Err(GatewayError::Config("cluster smaller than k + m".into()));
        }
        let ctx = Arc::new(HeContext::new(config.preset()?.params())?);
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let ledger = Arc::new(ledger);
        let tx = events.clone();
        ledger.subscribe(Box::new(move |block: &AuditBlock| {
            let _ = tx.send(GatewayEvent { event: "ledger.appended".into(), data: block_json(block) });
        }));
        let consent = ConsentStore::new(config.consent.ttl_ms);
        for p in &config.consent.policies {
            consent.put_policy(p.clone())?;
        }
        let owners: std::collections::BTreeSet<&str> = config.devices.iter().map(|d| d.user_id.as_str()).collect();
        for user in owners {
            if !config.consent.policies.iter().any(|p| p.user_id == user) {
                consent.put_policy(config.consent.default_policy.build(user))?;
            }
        }
        let keys = KeyService::new(Arc::clone(&ctx), config.seed, config.consent.tree_depth);
        let dp_seed = petwear_core::crypto::hmac(&config.seed.to_le_bytes(), &[b"dp-noise"]);
        Ok(Arc::new(Gateway {
            ctx,
            ledger,
            consent,
            keys: Mutex::new(keys),
            cluster,
            packets: RwLock::default(),
            budgets: Mutex::default(),
            dp_rng: Mutex::new(ChaCha20Rng::from_seed(dp_seed)),
            channels: Channels::default(),
            events,
            clock,
            counters: Counters::default(),
            config,
        }))
    }

    /// In-memory ledger and storage with the system clock.
    pub fn ephemeral(config: ScenarioConfig) -> Result<Arc<Self>> {
        let nodes = config.storage.nodes;
        Gateway::new(config, Ledger::in_memory(), Cluster::in_memory(nodes), Clock::System)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn context(&self) -> &Arc<HeContext> {
        &self.ctx
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn clock(&self) -> &Clock {
        &self.clock
    }

    pub fn now(&self) -> i64 {
        self.clock.now()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<GatewayEvent> {
        self.events.subscribe()
    }

    fn emit(&self, event: &str, data: Value) {
        let _ = self.events.send(GatewayEvent { event: event.into(), data });
    }

    pub fn key_unwraps(&self) -> u64 {
        self.keys.lock().expect("key service lock").unwrap_count()
    }

    pub fn packets(&self) -> Vec<PacketRecord> {
        self.packets.read().expect("packet index lock").clone()
    }

    /// Create keys for the user's categories ahead of the first packet.
    pub fn warm_keys(&self, user_id: &str) -> Result<()> {
        let mut keys = self.keys.lock().expect("key service lock");
        for m in petwear_core::telemetry::Metric::ALL {
            keys.public_key(user_id, m.category())?;
        }
        Ok(())
    }

    /// Process one device packet to storage. Returns the record, the frame
    /// the device sent and stage timings.
    pub fn ingest(&self, packet: &Packet) -> Result<(PacketRecord, Vec<u8>, StageTimings)> {
        let out = self.ingest_inner(packet);
        match &out {
            Ok((rec, _, t)) => {
                let c = &self.counters;
                c.packets.fetch_add(1, Ordering::Relaxed);
                c.samples.fetch_add(rec.count as u64, Ordering::Relaxed);
                c.ciphertext_bytes.fetch_add(rec.ciphertext_bytes as u64, Ordering::Relaxed);
                c.compressed_bytes.fetch_add(rec.compressed_bytes as u64, Ordering::Relaxed);
                c.frame_bytes.fetch_add(rec.frame_bytes as u64, Ordering::Relaxed);
                c.ingest_micros.fetch_add(t.total().as_micros() as u64, Ordering::Relaxed);
            }
            Err(_) => {
                self.counters.ingest_errors.fetch_add(1, Ordering::Relaxed);
            }
        }
        out
    }

    fn ingest_inner(&self, packet: &Packet) -> Result<(PacketRecord, Vec<u8>, StageTimings)> {
        let channel = self.channels.get_or_open(&packet.device_id, &packet.user_id, &self.keys, self.config.seed)?;
        let mut channel = channel.lock().expect("channel lock");
        let out = channel.process(&self.ctx, &self.keys, &self.cluster, packet, self.config.codec, self.config.stripe)?;
        self.packets.write().expect("packet index lock").push(out.0.clone());
        Ok(out)
    }

    pub fn create_request(&self, new: NewRequest) -> Result<TransferRequest> {
        if new.requester.trim().is_empty() || new.user_id.trim().is_empty() {
            return Err(petwear_core::consent::ConsentError::InvalidRequest("requester and user_id are required".into()).into());
        }
        let req = self.consent.submit(new, self.now(), &self.ledger)?;
        let data = serde_json::to_value(&req)?;
        if req.state == RequestState::Pending {
            self.emit("request.pending", data);
        } else {
            self.emit("request.decided", data);
        }
        Ok(req)
    }

    /// Apply a user decision. Only the first transition emits an event.
    pub fn decide(&self, request_id: &str, decision: Decision, actor: &str) -> Result<TransferRequest> {
        let before = self.consent.get(request_id).map(|r| r.state);
        let req = self.consent.decide_pending(request_id, decision, actor, self.now(), &self.ledger)?;
        if before == Some(RequestState::Pending) && req.state != RequestState::Pending {
            self.emit("request.decided", serde_json::to_value(&req)?);
        }
        Ok(req)
    }

    pub fn request(&self, request_id: &str) -> Option<TransferRequest> {
        self.consent.get(request_id)
    }

    pub fn pending(&self, user_id: Option<&str>) -> Vec<TransferRequest> {
        self.consent.pending(user_id, self.now())
    }

    pub fn requests(&self, user_id: Option<&str>) -> Vec<TransferRequest> {
        self.consent.expire(self.now());
        self.consent.list(user_id)
    }

    pub fn policy(&self, user_id: &str) -> ConsentPolicy {
        self.consent.policy(user_id)
    }

    pub fn put_policy(&self, policy: ConsentPolicy) -> Result<ConsentPolicy> {
        let stored = self.consent.put_policy(policy)?;
        self.emit("policy.updated", json!({"user_id": stored.user_id, "version": stored.version}));
        Ok(stored)
    }

    pub fn ledger_query(&self, filter: &Filter) -> Vec<AuditBlock> {
        self.ledger.query(filter)
    }

    /// Revoke a recipient's access to the user's future epochs.
    pub fn revoke(&self, user_id: &str, recipient: &str, actor: &str) -> Result<bool> {
        if actor != user_id {
            return Err(petwear_core::consent::ConsentError::Unauthorized { actor: actor.into(), user: user_id.into() }.into());
        }
        let changed = self.keys.lock().expect("key service lock").revoke(user_id, recipient)?;
        if changed {
            self.ledger.append(
                AuditEvent::new(EventKind::Revoked, user_id, actor, self.now()).with_detail("recipient", recipient),
            )?;
        }
        Ok(changed)
    }

    pub(crate) fn budget_capacity(&self) -> f64 {
        self.config.dp.budget_per_user
    }

    pub(crate) fn count_release(&self, ok: bool) {
        let c = if ok { &self.counters.releases } else { &self.counters.release_errors };
        c.fetch_add(1, Ordering::Relaxed);
    }

    pub fn budget_remaining(&self, user_id: &str) -> f64 {
        self.budgets
            .lock()
            .expect("budget lock")
            .get(user_id)
            .map(PrivacyBudget::remaining)
            .unwrap_or(self.budget_capacity())
    }

    pub fn metrics(&self) -> MetricsSnapshot {
        let c = &self.counters;
        let packets = c.packets.load(Ordering::Relaxed);
        let requests = self.requests(None);
        let nodes = self.cluster.nodes();
        MetricsSnapshot {
            packets_ingested: packets,
            samples_ingested: c.samples.load(Ordering::Relaxed),
            ciphertext_bytes: c.ciphertext_bytes.load(Ordering::Relaxed),
            compressed_bytes: c.compressed_bytes.load(Ordering::Relaxed),
            frame_bytes: c.frame_bytes.load(Ordering::Relaxed),
            ingest_errors: c.ingest_errors.load(Ordering::Relaxed),
            mean_ingest_ms: if packets == 0 { 0.0 } else { c.ingest_micros.load(Ordering::Relaxed) as f64 / packets as f64 / 1000.0 },
            releases: c.releases.load(Ordering::Relaxed),
            release_errors: c.release_errors.load(Ordering::Relaxed),
            key_unwraps: self.key_unwraps(),
            requests_total: requests.len(),
            requests_pending: requests.iter().filter(|r| r.state == RequestState::Pending).count(),
            ledger_blocks: self.ledger.len(),
            ledger_intact: self.ledger.verify().is_intact(),
            storage_nodes_live: nodes.iter().filter(|n| n.is_live()).count(),
            storage_nodes: nodes.len(),
        }
    }
}

pub fn block_json(block: &AuditBlock) -> Value {
    serde_json::to_value(block).unwrap_or(Value::Null)
}
