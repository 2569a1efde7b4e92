use std::collections::BTreeMap;
use std::path::Path;

use petwear_core::consent::{ContextTag, NewRequest, RecipientClass, RequestState};
use petwear_core::dataplane::NodeFault;
use petwear_core::ledger::{Decision, EventKind, Filter, Ledger};
use petwear_core::telemetry::{simulate_stream, Category};
use petwear_gateway::config::{FaultPlan, PolicyTemplate, ScriptedRequest};
use petwear_gateway::scenario::run_scenario;
use petwear_gateway::{Gateway, GatewayError, ScenarioConfig};

fn script(requester: &str, recipient: RecipientClass, user: &str, cats: &[Category]) -> ScriptedRequest {
    ScriptedRequest {
        requester: requester.into(),
        recipient,
        user_id: user.into(),
        categories: cats.to_vec(),
        context: ContextTag::Routine,
        user_decision: None,
        release: true,
    }
}

fn kinds_for(ledger: &Ledger, request_id: &str) -> Vec<EventKind> {
    ledger
        .query(&Filter { request_id: Some(request_id.into()), ..Filter::default() })
        .iter()
        .map(|b| b.event.kind)
        .collect()
}

fn full_config() -> ScenarioConfig {
    let mut researcher = script("lab-1", RecipientClass::Researcher, "user-000", &[Category::HeartRate, Category::Glucose]);
    researcher.user_decision = Some(Decision::Allow);
    let mut clinician = script("dr-a", RecipientClass::Clinician, "user-001", &[Category::Temperature]);
    clinician.context = ContextTag::Emergency;
    let mut refused = script("lab-2", RecipientClass::Researcher, "user-001", &[Category::HeartRate]);
    refused.user_decision = Some(Decision::Deny);
    ScenarioConfig {
        duration_s: 40,
        requests: vec![researcher, clinician, refused, script("ins-1", RecipientClass::Insurer, "user-000", &[Category::HeartRate])],
        ..ScenarioConfig::default()
    }
}

#[test]
fn ingest_only_appends_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig { duration_s: 10, ..ScenarioConfig::default() };
    let s = run_scenario(&cfg, dir.path()).unwrap();
    assert_eq!(s.ledger_blocks, 0);
    assert!(s.packets > 0);
    assert_eq!(Ledger::open(dir.path().join("ledger.petl")).unwrap().len(), 0);
}

#[test]
fn lifecycles_per_request() {
    let dir = tempfile::tempdir().unwrap();
    let s = run_scenario(&full_config(), dir.path()).unwrap();
    assert!(s.ledger_intact);
    let ledger = Ledger::open(dir.path().join("ledger.petl")).unwrap();
    use EventKind::*;
    // Researcher: asked, approved, then per category one key, one decryption, one noisy release.
    assert_eq!(
        kinds_for(&ledger, "req-00000001"),
        [Requested, Notified, Decided, KeyReleased, Decrypted, DpReleased, KeyReleased, Decrypted, DpReleased]
    );
    // Emergency clinician: allowed by policy, raw release.
    assert_eq!(kinds_for(&ledger, "req-00000002"), [Requested, Decided, KeyReleased, Decrypted]);
    assert_eq!(s.requests[1].raw_counts["temperature"], 40);
    // Refused by the user and denied by policy: nothing is decrypted.
    assert_eq!(kinds_for(&ledger, "req-00000003"), [Requested, Notified, Decided]);
    assert_eq!(kinds_for(&ledger, "req-00000004"), [Requested, Decided]);
    assert_eq!(s.requests[2].state, RequestState::Denied);
    assert!(s.requests[3].error.as_deref().unwrap().contains("not allowed"));
    assert_eq!(s.key_unwraps as usize, s.ledger_events["KeyReleased"]);
    let dp = &s.requests[0].dp_values;
    assert_eq!(dp.keys().collect::<Vec<_>>(), ["glucose", "heart_rate"]);
}

#[test]
fn seeded_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_scenario(&full_config(), &dir.path().join("a")).unwrap();
    let b = run_scenario(&full_config(), &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    for file in ["summary.json", "manifests.jsonl", "ledger.petl", "frames/device-000.frames"] {
        assert_eq!(std::fs::read(dir.path().join("a").join(file)).unwrap(), std::fs::read(dir.path().join("b").join(file)).unwrap(), "{file}");
    }
    let other = run_scenario(&ScenarioConfig { seed: 8, ..full_config() }, &dir.path().join("c")).unwrap();
    assert_ne!(a.requests[0].dp_values, other.requests[0].dp_values);
}

#[test]
fn run_dir_is_not_reused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig { duration_s: 5, ..ScenarioConfig::default() };
    run_scenario(&cfg, dir.path()).unwrap();
    assert!(matches!(run_scenario(&cfg, dir.path()), Err(GatewayError::Config(_))));
}

fn files_under(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_under(&p, out);
        } else {
            out.push(p);
        }
    }
}

#[test]
fn no_plaintext_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = full_config();
    run_scenario(&cfg, dir.path()).unwrap();

    // Every raw reading in several encodings a leak could take.
    let mut needles: Vec<Vec<u8>> = Vec::new();
    for d in &cfg.devices {
        // Zero readings (idle step counts) encode as all-zero bytes, which any length field matches.
        for s in simulate_stream(d, cfg.duration_s as i64 * 1000).unwrap().into_iter().filter(|s| s.value != 0.0) {
            needles.push(s.value.to_le_bytes().to_vec());
            needles.push(s.value.to_be_bytes().to_vec());
            needles.push(format!("{}", s.value).into_bytes());
        }
    }
    needles.retain(|n| n.len() >= 6);
    let mut files = Vec::new();
    files_under(dir.path(), &mut files);
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    for f in &files {
        let bytes = std::fs::read(f).unwrap();
        let n = needles.iter().filter(|needle| bytes.windows(needle.len()).any(|w| w == needle.as_slice())).count();
        if n > 0 {
            hits.insert(f.strip_prefix(dir.path()).unwrap().display().to_string(), n);
        }
    }
    assert!(files.iter().any(|f| f.starts_with(dir.path().join("nodes"))));
    assert!(hits.keys().all(|f| f.starts_with("keys/")), "plaintext found in {hits:?}");
}

#[test]
fn budget_exhaustion_stops_before_decryption() {
    let mut cfg = full_config();
    cfg.dp.budget_per_user = 0.7;
    cfg.requests.truncate(1);
    cfg.requests[0].categories = vec![Category::HeartRate];
    let gw = Gateway::ephemeral(cfg.clone()).unwrap();
    for d in &cfg.devices {
        for p in petwear_gateway::pipeline::packetize(&simulate_stream(d, 20_000).unwrap(), 16) {
            gw.ingest(&p).unwrap();
        }
    }
    let new = || NewRequest {
        requester: "lab-1".into(),
        recipient: RecipientClass::Researcher,
        user_id: "user-000".into(),
        categories: vec![Category::HeartRate],
        context: ContextTag::Routine,
    };
    let first = gw.create_request(new()).unwrap();
    gw.decide(&first.request_id, Decision::Allow, "user-000").unwrap();
    gw.release_for_analysis(&first.request_id).unwrap();
    let unwraps = gw.key_unwraps();
    let second = gw.create_request(new()).unwrap();
    gw.decide(&second.request_id, Decision::Allow, "user-000").unwrap();
    let err = gw.release_for_analysis(&second.request_id).unwrap_err();
    assert!(matches!(err, GatewayError::Dp(petwear_core::dp::DpError::BudgetExhausted { .. })), "{err}");
    assert_eq!(gw.key_unwraps(), unwraps);
    use EventKind::*;
    assert_eq!(kinds_for(gw.ledger(), &second.request_id), [Requested, Notified, Decided]);
}

#[test]
fn revocation_blocks_later_epochs() {
    let cfg = ScenarioConfig { duration_s: 20, ..ScenarioConfig::default() };
    let gw = Gateway::ephemeral(cfg.clone()).unwrap();
    let ingest = |ms| {
        for d in &cfg.devices {
            for p in petwear_gateway::pipeline::packetize(&simulate_stream(d, ms).unwrap(), 16) {
                gw.ingest(&p).unwrap();
            }
        }
    };
    ingest(16_000);
    let emergency = || NewRequest {
        requester: "dr-a".into(),
        recipient: RecipientClass::Clinician,
        user_id: "user-000".into(),
        categories: vec![Category::HeartRate],
        context: ContextTag::Emergency,
    };
    let r1 = gw.create_request(emergency()).unwrap();
    assert!(gw.release_for_analysis(&r1.request_id).is_ok());
    assert!(matches!(gw.revoke("user-000", "dr-a", "dr-a"), Err(GatewayError::Consent(_))));
    assert!(gw.revoke("user-000", "dr-a", "user-000").unwrap());
    assert!(!gw.revoke("user-000", "dr-a", "user-000").unwrap());
    ingest(16_000);
    let r2 = gw.create_request(emergency()).unwrap();
    let err = gw.release_for_analysis(&r2.request_id).unwrap_err();
    assert!(matches!(err, GatewayError::Consent(petwear_core::consent::ConsentError::UnwrapFailed)), "{err}");
    // A recipient that was never revoked still reads both epochs.
    let r3 = gw
        .create_request(NewRequest { requester: "dr-b".into(), ..emergency() })
        .unwrap();
    let out = gw.release_for_analysis(&r3.request_id).unwrap();
    assert_eq!(out.categories[0].epochs.len(), 2);
    assert_eq!(gw.ledger_query(&Filter { kind: Some(EventKind::Revoked), ..Filter::default() }).len(), 1);
}

#[test]
fn step_and_device_named_on_failure() {
    let gw = Gateway::ephemeral(ScenarioConfig::default()).unwrap();
    let p = petwear_gateway::pipeline::Packet {
        device_id: "device-000".into(),
        user_id: "user-000".into(),
        metric: petwear_core::telemetry::Metric::HeartRateBpm,
        timestamps: vec![0],
        values: vec![f64::NAN],
    };
    let msg = gw.ingest(&p).unwrap_err().to_string();
    assert!(msg.contains("normalize") && msg.contains("device-000"), "{msg}");
}

#[test]
fn storage_faults_tolerated_up_to_parity() {
    let mut cfg = full_config();
    cfg.storage.faults = vec![FaultPlan { node: 0, fault: NodeFault::Down }, FaultPlan { node: 3, fault: NodeFault::Corrupt }];
    let dir = tempfile::tempdir().unwrap();
    let s = run_scenario(&cfg, dir.path()).unwrap();
    assert!(s.requests[0].released && s.requests[1].released);

    cfg.storage.faults.push(FaultPlan { node: 5, fault: NodeFault::Down });
    let s = run_scenario(&cfg, &dir.path().join("three")).unwrap();
    assert!(!s.requests[1].released);
    assert!(s.requests[1].error.is_some());
}

#[test]
fn deny_all_template_auto_denies() {
    let mut cfg = full_config();
    cfg.consent.default_policy = PolicyTemplate::DenyAll;
    let dir = tempfile::tempdir().unwrap();
    let s = run_scenario(&cfg, dir.path()).unwrap();
    assert!(s.requests.iter().all(|r| r.state == RequestState::Denied && !r.released));
    assert!(!s.ledger_events.contains_key("Decrypted"));
}
