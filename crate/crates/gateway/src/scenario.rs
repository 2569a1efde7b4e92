//! Deterministic end-to-end run: simulate devices, ingest, then replay the
//! scripted transfer requests. Everything written except `timing.json` is a
//! pure function of the configuration.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use petwear_core::consent::{NewRequest, RequestState};
use petwear_core::dataplane::Cluster;
use petwear_core::ledger::{DecidedBy, Ledger};
use petwear_core::telemetry::simulate_stream;
use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::error::{GatewayError, Result};
use crate::pipeline::packetize;
use crate::state::{Clock, Gateway};

/// Simulated time between scripted steps.
const STEP_MS: i64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestSummary {
    pub request_id: String,
    pub user_id: String,
    pub requester: String,
    pub state: RequestState,
    pub decided_by: Option<DecidedBy>,
    pub released: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Noisy means per category for aggregate releases.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub dp_values: BTreeMap<String, f64>,
    /// Decrypted reading counts per category for raw releases.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub raw_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub he_preset: String,
    pub devices: usize,
    pub samples: u64,
    pub packets: u64,
    pub ciphertext_bytes: u64,
    pub compressed_bytes: u64,
    pub frame_bytes: u64,
    pub ledger_blocks: u64,
    pub ledger_intact: bool,
    pub ledger_events: BTreeMap<String, usize>,
    pub key_unwraps: u64,
    pub requests: Vec<RequestSummary>,
}

/// Run a scenario into `run_dir`, which must not hold a previous run.
pub fn run_scenario(config: &ScenarioConfig, run_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(run_dir)?;
    let ledger_path = run_dir.join("ledger.petl");
    if ledger_path.exists() {
        return Err(GatewayError::Config(format!("{} already holds a run", run_dir.display())));
    }
    let ledger = Ledger::open(&ledger_path)?;
    let cluster = Cluster::in_dir(config.storage.nodes, &run_dir.join("nodes"))?;
    let gw = Gateway::new(config.clone(), ledger, cluster, Clock::simulated(0))?;
    let slots = gw.context().slots();

    let frames_dir = run_dir.join("frames");
    std::fs::create_dir_all(&frames_dir)?;
    let mut manifests = std::io::BufWriter::new(std::fs::File::create(run_dir.join("manifests.jsonl"))?);
    let duration_ms = config.duration_s as i64 * 1000;
    let ingest_started = Instant::now();
    for device in &config.devices {
        let samples = simulate_stream(device, duration_ms)?;
        let mut frames = std::io::BufWriter::new(std::fs::File::create(frames_dir.join(format!("{}.frames", device.device_id)))?);
        for packet in packetize(&samples, slots) {
            let (record, frame, _) = gw.ingest(&packet)?;
            frames.write_all(&(frame.len() as u32).to_le_bytes())?;
            frames.write_all(&frame)?;
            serde_json::to_writer(&mut manifests, &record)?;
            manifests.write_all(b"\n")?;
        }
        frames.flush()?;
    }
    manifests.flush()?;
    let ingest_secs = ingest_started.elapsed().as_secs_f64();
    gw.clock().set(duration_ms);

    for plan in &config.storage.faults {
        gw.cluster().nodes()[plan.node].set_fault(plan.fault);
    }

    let mut requests = Vec::new();
    for script in &config.requests {
        gw.clock().advance(STEP_MS);
        let mut req = gw.create_request(NewRequest {
            requester: script.requester.clone(),
            recipient: script.recipient,
            user_id: script.user_id.clone(),
            categories: script.categories.clone(),
            context: script.context,
        })?;
        if req.state == RequestState::Pending {
            if let Some(decision) = script.user_decision {
                gw.clock().advance(STEP_MS);
                req = gw.decide(&req.request_id, decision, &script.user_id)?;
            }
        }
        let mut summary = RequestSummary {
            request_id: req.request_id.clone(),
            user_id: req.user_id.clone(),
            requester: req.requester.clone(),
            state: req.state,
            decided_by: req.decided_by,
            released: false,
            error: None,
            dp_values: BTreeMap::new(),
            raw_counts: BTreeMap::new(),
        };
        if script.release {
            gw.clock().advance(STEP_MS);
            match gw.release_for_analysis(&req.request_id) {
                Ok(out) => {
                    summary.released = true;
                    for c in out.categories {
                        if let Some(dp) = c.dp {
                            summary.dp_values.insert(c.category.to_string(), dp.values[0]);
                        } else {
                            summary.raw_counts.insert(c.category.to_string(), c.raw.iter().map(|s| s.values.len()).sum());
                        }
                    }
                }
                Err(e) => summary.error = Some(e.to_string()),
            }
        }
        requests.push(summary);
    }

    gw.keys.lock().expect("key service lock").write_fixtures(&run_dir.join("keys"))?;

    let metrics = gw.metrics();
    let mut ledger_events = BTreeMap::new();
    for b in gw.ledger().snapshot() {
        *ledger_events.entry(format!("{:?}", b.event.kind)).or_insert(0) += 1;
    }
    let summary = RunSummary {
        seed: config.seed,
        he_preset: config.he_preset.clone(),
        devices: config.devices.len(),
        samples: metrics.samples_ingested,
        packets: metrics.packets_ingested,
        ciphertext_bytes: metrics.ciphertext_bytes,
        compressed_bytes: metrics.compressed_bytes,
        frame_bytes: metrics.frame_bytes,
        ledger_blocks: metrics.ledger_blocks,
        ledger_intact: metrics.ledger_intact,
        ledger_events,
        key_unwraps: metrics.key_unwraps,
        requests,
    };
    std::fs::write(run_dir.join("config.json"), serde_json::to_vec_pretty(config)?)?;
    std::fs::write(run_dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    let timing = serde_json::json!({
        "total_s": started.elapsed().as_secs_f64(),
        "ingest_s": ingest_secs,
        "mean_ingest_ms": metrics.mean_ingest_ms,
    });
    std::fs::write(run_dir.join("timing.json"), serde_json::to_vec_pretty(&timing)?)?;
    Ok(summary)
}
