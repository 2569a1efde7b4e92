use std::process::Command;

use serde_json::Value;

fn petwear(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_petwear")).args(args).output().unwrap()
}

#[test]
fn run_with_overrides_then_verify_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = petwear(&["run", "--out", out.to_str().unwrap(), "--duration_s", "8", "--stripe.k=3", "--storage.nodes", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["ledger_blocks"], 0);
    let cfg: Value = serde_json::from_slice(&std::fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["stripe"]["k"], 3);
    assert_eq!(std::fs::read_dir(out.join("nodes")).unwrap().count(), 5);

    let ledger = out.join("ledger.petl");
    assert!(petwear(&["verify-ledger", ledger.to_str().unwrap()]).status.success());
    let bad = petwear(&["run", "--out", dir.path().join("x").to_str().unwrap(), "--stripe.q", "1"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn verify_ledger_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("l.petl");
    let ledger = petwear_core::ledger::Ledger::open(&path).unwrap();
    for i in 0..3 {
        ledger
            .append(petwear_core::ledger::AuditEvent::new(petwear_core::ledger::EventKind::Requested, "u", "r", i).with_request(format!("req-{i}")))
            .unwrap();
    }
    drop(ledger);
    let ok = petwear(&["verify-ledger", path.to_str().unwrap()]);
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("intact: 3 blocks"));
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 5;
    bytes[last] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert_eq!(petwear(&["verify-ledger", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn bench_validation_and_report() {
    let zero = petwear(&["bench", "--devices", "0", "--duration", "1"]);
    assert!(!zero.status.success());
    assert!(String::from_utf8_lossy(&zero.stderr).contains("at least one device"));

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bench.json");
    let o = petwear(&["bench", "--devices", "2", "--duration", "1", "--rate", "3", "--out", file.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&std::fs::read(&file).unwrap()).unwrap();
    assert_eq!(r["packets_processed"], 6);
    assert!(r["p95_ms"].as_f64().unwrap() >= r["median_ms"].as_f64().unwrap());
}

#[test]
fn serve_reports_busy_port() {
    let held = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = held.local_addr().unwrap().port().to_string();
    let o = petwear(&["serve", "--port", &port]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
}

#[test]
fn utilities() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let o = petwear(&["mpc-demo", "--parties", "5", "--transcript", transcript.to_str().unwrap()]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["sum"], v["plaintext_sum"]);
    let lines = std::fs::read_to_string(&transcript).unwrap();
    assert_eq!(lines.lines().count() as u64, v["messages"].as_u64().unwrap());

    let csv = dir.path().join("in.csv");
    std::fs::write(&csv, "device_id,user_id,metric,timestamp_ms,value\nd,u,heart_rate_bpm,0,70\nd,u,heart_rate_bpm,1000,71\n").unwrap();
    assert!(petwear(&["ingest", "--csv", csv.to_str().unwrap()]).status.success());
    std::fs::write(&csv, "device_id,user_id,metric,timestamp_ms,value\nd,u,heart_rate_bpm,0,900\n").unwrap();
    let bad = petwear(&["ingest", "--csv", csv.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));

    let k = petwear(&["keygen", "--preset", "toy"]);
    assert!(k.status.success());
    assert!(petwear(&["keygen", "--preset", "huge"]).status.code() == Some(2));
}
