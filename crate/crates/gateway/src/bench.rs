//! Load benchmark: N simulated devices each emit packets at a fixed rate for
//! a wall-clock duration; a worker pool runs every packet through the ingest
//! path and the per-packet processing latency is recorded.

use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use petwear_core::telemetry::{simulate_stream, DeviceProfile};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{GatewayError, Result};
use crate::pipeline::{packetize, Packet};
use crate::state::Gateway;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub devices: usize,
    pub duration_s: f64,
    /// Packets per device per second.
    pub rate: f64,
    pub seed: u64,
    pub he_preset: String,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { devices: 1, duration_s: 5.0, rate: 1.0, seed: 7, he_preset: "toy-wide".into(), workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub devices: usize,
    pub duration_s: f64,
    pub rate: f64,
    pub workers: usize,
    pub packets_expected: u64,
    pub packets_processed: u64,
    pub errors: u64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub mean_ms: f64,
    pub wall_s: f64,
    /// Processed packets per device per second of wall time.
    pub per_device_throughput: f64,
    pub total_throughput: f64,
    pub peak_memory_bytes: Option<u64>,
    pub cpu_percent: Option<f64>,
    /// Some packets were not processed; the figures cover the rest.
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub baseline_devices: usize,
    pub devices: usize,
    pub baseline_per_device_throughput: f64,
    pub per_device_throughput: f64,
    /// `1 - loaded / baseline` per-device throughput, in percent.
    pub percent: f64,
    pub baseline_median_ms: f64,
    pub median_ms: f64,
}

pub fn degradation(baseline: &BenchReport, loaded: &BenchReport) -> Degradation {
    let percent = if baseline.per_device_throughput > 0.0 {
        (1.0 - loaded.per_device_throughput / baseline.per_device_throughput) * 100.0
    } else {
        f64::NAN
    };
    Degradation {
        baseline_devices: baseline.devices,
        devices: loaded.devices,
        baseline_per_device_throughput: baseline.per_device_throughput,
        per_device_throughput: loaded.per_device_throughput,
        percent,
        baseline_median_ms: baseline.median_ms,
        median_ms: loaded.median_ms,
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
    }
}

/// Peak resident set size of this process, where the platform reports it.
pub fn peak_memory_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn cpu_time() -> Option<Duration> {
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    // SAFETY: getrusage only writes into the struct we pass.
    if unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut usage) } != 0 {
        return None;
    }
    let tv = |t: libc::timeval| Duration::new(t.tv_sec as u64, t.tv_usec as u32 * 1000);
    Some(tv(usage.ru_utime) + tv(usage.ru_stime))
}

fn device_packets(profile: &DeviceProfile, ticks: usize, slots: usize) -> Result<Vec<Packet>> {
    // Each tick sends one full packet; simulate enough readings to cover all of them.
    let metrics = profile.metrics.len().max(1);
    let seconds = (ticks.div_ceil(metrics) * slots + 1) as i64;
    let samples = simulate_stream(profile, seconds * profile.sampling_period_ms)?;
    let packets: Vec<Packet> = packetize(&samples, slots).into_iter().filter(|p| p.values.len() == slots).take(ticks).collect();
    if packets.len() < ticks {
        return Err(GatewayError::Config("device stream too short for the requested ticks".into()));
    }
    Ok(packets)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.devices == 0 {
        return Err(GatewayError::Config("bench needs at least one device".into()));
    }
    if !(cfg.duration_s > 0.0 && cfg.duration_s.is_finite()) || !(cfg.rate > 0.0 && cfg.rate.is_finite()) {
        return Err(GatewayError::Config("duration and rate must be positive".into()));
    }
    let profiles: Vec<DeviceProfile> = (0..cfg.devices)
        .map(|i| DeviceProfile::typical(format!("device-{i:05}"), format!("user-{i:05}"), cfg.seed.wrapping_add(i as u64)))
        .collect();
    let scenario = ScenarioConfig {
        seed: cfg.seed,
        he_preset: cfg.he_preset.clone(),
        devices: profiles.clone(),
        ..ScenarioConfig::default()
    };
    let gw = Gateway::ephemeral(scenario)?;
    let slots = gw.context().slots();
    let ticks = ((cfg.duration_s * cfg.rate).ceil() as usize).max(1);
    let packets: Vec<Vec<Packet>> = profiles.iter().map(|p| device_packets(p, ticks, slots)).collect::<Result<_>>()?;
    for p in &profiles {
        gw.warm_keys(&p.user_id)?;
    }
    let packets = Arc::new(packets);
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);

    let (tx, rx) = mpsc::channel::<(usize, usize)>();
    let rx = Arc::new(Mutex::new(rx));
    let errors = Arc::new(Mutex::new((0u64, None::<String>)));
    let cpu_start = cpu_time();
    let start = Instant::now();
    let handles: Vec<_> = (0..workers)
        .map(|_| {
            let rx = Arc::clone(&rx);
            let gw = Arc::clone(&gw);
            let packets = Arc::clone(&packets);
            let errors = Arc::clone(&errors);
            std::thread::spawn(move || {
                let mut latencies = Vec::new();
                loop {
                    let job = rx.lock().expect("job queue lock").recv();
                    let Ok((d, i)) = job else { break };
                    let t0 = Instant::now();
                    match gw.ingest(&packets[d][i]) {
                        Ok(_) => latencies.push(t0.elapsed().as_secs_f64() * 1000.0),
                        Err(e) => {
                            let mut errs = errors.lock().expect("error lock");
                            errs.0 += 1;
                            errs.1.get_or_insert_with(|| e.to_string());
                        }
                    }
                }
                latencies
            })
        })
        .collect();

    for tick in 0..ticks {
        let due = start + Duration::from_secs_f64(tick as f64 / cfg.rate);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        for d in 0..cfg.devices {
            tx.send((d, tick)).expect("workers alive");
        }
    }
    drop(tx);
    let mut latencies: Vec<f64> = Vec::new();
    for h in handles {
        latencies.extend(h.join().map_err(|_| GatewayError::Config("bench worker panicked".into()))?);
    }
    let wall = start.elapsed().as_secs_f64().max(cfg.duration_s);
    let cpu_percent = match (cpu_start, cpu_time()) {
        (Some(a), Some(b)) => Some((b - a).as_secs_f64() / wall * 100.0),
        _ => None,
    };
    latencies.sort_by(f64::total_cmp);
    let processed = latencies.len() as u64;
    let (errors, first_error) = errors.lock().expect("error lock").clone();
    Ok(BenchReport {
        devices: cfg.devices,
        duration_s: cfg.duration_s,
        rate: cfg.rate,
        workers,
        packets_expected: (ticks * cfg.devices) as u64,
        packets_processed: processed,
        errors,
        median_ms: median(&latencies),
        p95_ms: percentile(&latencies, 95.0),
        max_ms: latencies.last().copied().unwrap_or(f64::NAN),
        mean_ms: if latencies.is_empty() { f64::NAN } else { latencies.iter().sum::<f64>() / latencies.len() as f64 },
        wall_s: wall,
        per_device_throughput: processed as f64 / cfg.devices as f64 / wall,
        total_throughput: processed as f64 / wall,
        peak_memory_bytes: peak_memory_bytes(),
        cpu_percent,
        partial: errors > 0 || processed < (ticks * cfg.devices) as u64,
        first_error,
    })
}
