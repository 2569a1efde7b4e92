use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use super::{Metric, Sample};

pub const CSV_HEADER: [&str; 5] = ["device_id", "user_id", "metric", "timestamp_ms", "value"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    /// 1-based line number in the input (the header is line 1).
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct IngestReport {
    pub samples: Vec<Sample>,
    pub errors: Vec<RowError>,
}

impl IngestReport {
    pub fn accepted(&self) -> usize {
        self.samples.len()
    }

    pub fn rejected(&self) -> usize {
        self.errors.len()
    }
}

pub fn ingest_csv(path: &Path) -> std::io::Result<IngestReport> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file)
}

/// Parse vitals CSV. Malformed, out-of-range and out-of-order rows are
/// rejected individually with their line number; the rest are kept.
pub fn ingest_reader<R: Read>(reader: R) -> std::io::Result<IngestReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let mut report = IngestReport::default();

    let headers = rdr.headers().map_err(std::io::Error::other)?.clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != CSV_HEADER {
        report.errors.push(RowError {
            line: 1,
            message: format!("expected header '{}', found '{}'", CSV_HEADER.join(","), got.join(",")),
        });
        return Ok(report);
    }

    let mut last_ts: HashMap<(String, Metric), i64> = HashMap::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                report.errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record) {
            Ok(sample) => {
                let key = (sample.device_id.clone(), sample.metric);
                if let Some(&prev) = last_ts.get(&key) {
                    if sample.timestamp_ms <= prev {
                        report.errors.push(RowError {
                            line,
                            message: format!(
                                "timestamp {} does not increase for {}/{} (previous {prev})",
                                sample.timestamp_ms, sample.device_id, sample.metric
                            ),
                        });
                        continue;
                    }
                }
                last_ts.insert(key, sample.timestamp_ms);
                report.samples.push(sample);
            }
            Err(message) => report.errors.push(RowError { line, message }),
        }
    }
    Ok(report)
}

fn parse_row(record: &csv::StringRecord) -> Result<Sample, String> {
    if record.len() != CSV_HEADER.len() {
        return Err(format!("expected {} fields, found {}", CSV_HEADER.len(), record.len()));
    }
    let field = |i: usize| record.get(i).unwrap_or("").trim();
    let device_id = field(0);
    let user_id = field(1);
    if device_id.is_empty() || user_id.is_empty() {
        return Err("device_id and user_id must be non-empty".into());
    }
    let metric: Metric = field(2).parse().map_err(|e| format!("{e}"))?;
    let timestamp_ms: i64 = field(3)
        .parse()
        .map_err(|_| format!("invalid timestamp '{}'", field(3)))?;
    let value: f64 = field(4).parse().map_err(|_| format!("invalid value '{}'", field(4)))?;
    metric.check_range(value).map_err(|e| e.to_string())?;
    Ok(Sample {
        device_id: device_id.to_string(),
        user_id: user_id.to_string(),
        metric,
        timestamp_ms,
        value,
        category: metric.category(),
    })
}
