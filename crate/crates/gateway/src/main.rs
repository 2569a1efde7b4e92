use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use petwear_core::dataplane::Cluster;
use petwear_core::he::{HeContext, Preset, NOT_SECURE_BANNER};
use petwear_core::ledger::{verify_file, ChainStatus, Ledger};
use petwear_core::mpc::{
    decode_fixed, dealer_setup, encode_fixed, secure_aggregate, AggregateOp, Session, DEFAULT_MODULUS,
};
use petwear_core::telemetry::{ingest_csv, simulate_stream};
use petwear_gateway::bench::{degradation, run_bench, BenchConfig};
use petwear_gateway::config::parse_override_args;
use petwear_gateway::pipeline::packetize;
use petwear_gateway::scenario::run_scenario;
use petwear_gateway::{Clock, Gateway, ScenarioConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "petwear", version, about = "Privacy-preserving wearable telemetry gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API and event stream.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Persist the ledger and storage nodes here instead of in memory.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Ingest the configured devices' simulated streams before serving.
        #[arg(long)]
        ingest: bool,
    },
    /// Run a scenario end to end. Trailing `--dotted.key value` pairs override the config.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Per-packet latency and throughput under N concurrent devices.
    Bench {
        #[arg(long)]
        devices: usize,
        /// Wall-clock seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Packets per device per second.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run this many devices first and report throughput degradation against it.
        #[arg(long)]
        baseline: Option<usize>,
        #[arg(long, default_value = "toy-wide")]
        preset: String,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Check a ledger file's hash chain. Exits 1 when broken.
    VerifyLedger { file: PathBuf },
    /// Generate a key set and print its sizes and parameters.
    Keygen {
        #[arg(long, default_value = "toy-wide")]
        preset: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write public.hex (and secret.hex, unprotected) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a telemetry CSV file.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
    },
    /// Secure sum and mean of one reading per party.
    MpcDemo {
        #[arg(long, default_value_t = 3)]
        parties: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write the message transcript as JSON lines.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve { port, host, config, run_dir, ingest } => {
            let config = match config {
                Some(p) => ScenarioConfig::load(&p)?,
                None => ScenarioConfig::default(),
            };
            let nodes = config.storage.nodes;
            let gw = match &run_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let ledger = Ledger::open(dir.join("ledger.petl"))?;
                    Gateway::new(config.clone(), ledger, Cluster::in_dir(nodes, &dir.join("nodes"))?, Clock::System)?
                }
                None => Gateway::ephemeral(config.clone())?,
            };
            eprintln!("{NOT_SECURE_BANNER}");
            if ingest {
                let slots = gw.context().slots();
                for d in &config.devices {
                    let samples = simulate_stream(d, config.duration_s as i64 * 1000)?;
                    for p in packetize(&samples, slots) {
                        gw.ingest(&p)?;
                    }
                }
                eprintln!("ingested {} packets", gw.metrics().packets_ingested);
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, petwear_gateway::api::router(gw)).await?;
                anyhow::Ok(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, out, overrides } => {
            let base = match config {
                Some(p) => ScenarioConfig::load(&p)?,
                None => ScenarioConfig::default(),
            };
            let config = base.with_overrides(&parse_override_args(&overrides)?)?;
            let summary = run_scenario(&config, &out)?;
            print_json(&summary)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { devices, duration, rate, out, baseline, preset, workers, seed } => {
            let cfg = |devices| BenchConfig { devices, duration_s: duration, rate, seed, he_preset: preset.clone(), workers };
            let base = baseline.map(|n| run_bench(&cfg(n))).transpose()?;
            let report = run_bench(&cfg(devices))?;
            let doc = match &base {
                Some(b) => json!({"baseline": b, "report": report, "degradation": degradation(b, &report)}),
                None => json!(report),
            };
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_vec_pretty(&doc)?)?;
            }
            print_json(&doc)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyLedger { file } => match verify_file(&file)? {
            ChainStatus::Intact { blocks } => {
                println!("intact: {blocks} blocks");
                Ok(ExitCode::SUCCESS)
            }
            ChainStatus::Broken { index, reason } => {
                println!("broken at block {index}: {reason}");
                Ok(ExitCode::from(1))
            }
        },
        Command::Keygen { preset, seed, out } => {
            let Some(preset) = Preset::from_name(&preset) else { bail!("unknown preset {preset}") };
            eprintln!("{NOT_SECURE_BANNER}");
            let ctx = HeContext::new(preset.params())?;
            let keys = ctx.keygen(seed);
            let pk = ctx.serialize_public_key(&keys.public);
            let sk = ctx.serialize_secret_key(&keys.secret);
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("public.hex"), hex::encode(&pk))?;
                std::fs::write(dir.join("secret.hex"), hex::encode(&sk))?;
            }
            print_json(&json!({
                "preset": preset.name(),
                "slots": ctx.slots(),
                "plaintext_modulus": ctx.plaintext_modulus(),
                "public_key_bytes": pk.len(),
                "secret_key_bytes": sk.len(),
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest { csv } => {
            let report = ingest_csv(&csv)?;
            for e in &report.errors {
                eprintln!("line {}: {}", e.line, e.message);
            }
            print_json(&json!({"accepted": report.accepted(), "rejected": report.rejected()}))?;
            Ok(if report.rejected() == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::MpcDemo { parties, seed, transcript } => {
            if parties < 2 {
                bail!("mpc-demo needs at least 2 parties");
            }
            let (mut dealer, keys) = dealer_setup(parties, DEFAULT_MODULUS, seed)?;
            let readings: Vec<f64> = (0..parties).map(|i| 60.0 + 7.5 * i as f64 + 0.125).collect();
            let inputs: Vec<Vec<u64>> =
                readings.iter().map(|&r| encode_fixed(r, DEFAULT_MODULUS).map(|v| vec![v])).collect::<Result<_, _>>()?;
            let mut session = Session::new(&mut dealer, keys, 0, 1, seed)?;
            let sum = secure_aggregate(&mut session, &inputs, AggregateOp::Sum)?;
            let total = decode_fixed(sum, DEFAULT_MODULUS, 1);
            if let Some(path) = transcript {
                session.transcript().write_json_lines(std::fs::File::create(path)?)?;
            }
            print_json(&json!({
                "parties": parties,
                "sum": total,
                "mean": total / parties as f64,
                "plaintext_sum": readings.iter().sum::<f64>(),
                "messages": session.transcript().records.len(),
            }))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
