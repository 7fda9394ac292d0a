use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{Digest, Measurement, Status};
use crate::flagspace::Configuration;

/// One tested configuration and whatever measurements were taken for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: usize,
    pub config: Configuration,
    /// Suite order; benchmarks skipped by early termination are absent.
    pub measurements: Vec<(String, Measurement)>,
    pub annotation: String,
}

impl TraceRecord {
    pub fn measurement(&self, bench: &str) -> Option<&Measurement> {
        self.measurements.iter().find(|(b, _)| b == bench).map(|(_, m)| m)
    }

    pub fn time(&self, bench: &str) -> Option<f64> {
        self.measurement(bench).and_then(|m| m.time)
    }
}

/// Ordered log of every configuration a campaign tested.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CampaignTrace {
    pub records: Vec<TraceRecord>,
}

const HEADER: &str = "# seq\tbase_level\tbitstring\tbenchmark\ttime\tstatus\tdigest\tannotation";

impl CampaignTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of (configuration, benchmark) measurements in the trace.
    pub fn measurement_count(&self) -> usize {
        self.records.iter().map(|r| r.measurements.len()).sum()
    }

    /// Benchmark names in order of first appearance.
    pub fn benchmarks(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            for (b, _) in &r.measurements {
                if !out.contains(b) {
                    out.push(b.clone());
                }
            }
        }
        out
    }

    /// Checks that sequence numbers run 1, 2, 3, ...
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.seq != i + 1 {
                return Err(Error::Structural(format!(
                    "trace record {} has sequence number {}",
                    i + 1,
                    r.seq
                )));
            }
        }
        Ok(())
    }

    /// Same trace with every `cached` marker cleared.
    pub fn without_cache_markers(&self) -> CampaignTrace {
        let mut t = self.clone();
        for r in &mut t.records {
            for (_, m) in &mut r.measurements {
                m.cached = false;
            }
        }
        t
    }

    /// Tab-separated trace file, one line per measurement.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(64 * self.measurement_count() + HEADER.len());
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            let bits = r.config.bitstring();
            for (bench, m) in &r.measurements {
                let time = m.time.map(|t| t.to_string()).unwrap_or_else(|| "-".into());
                let digest = m.digest.as_ref().map(|d| d.to_string()).unwrap_or_else(|| "-".into());
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.seq,
                    r.config.base_level,
                    if bits.is_empty() { "-" } else { &bits },
                    bench,
                    time,
                    m.status,
                    digest,
                    r.annotation
                )
                .expect("writing to a string");
            }
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut trace = CampaignTrace::new();
        for (n, line) in text.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Structural(format!("trace line {}: {what}", n + 1));
            let cols: Vec<&str> = line.splitn(8, '\t').collect();
            if cols.len() != 8 {
                return Err(bad("expected 8 tab-separated columns"));
            }
            let seq: usize = cols[0].parse().map_err(|_| bad("bad sequence number"))?;
            let bits = if cols[2] == "-" { "" } else { cols[2] };
            let config = Configuration::from_bitstring(cols[1], bits)?;
            let status: Status = cols[5].parse()?;
            let time = match cols[4] {
                "-" => None,
                t => Some(t.parse::<f64>().map_err(|_| bad("bad time"))?),
            };
            let digest = match cols[6] {
                "-" => None,
                d => Some(d.parse::<Digest>()?),
            };
            if (status == Status::Ok) != time.is_some() {
                return Err(bad("time must be present exactly for ok measurements"));
            }
            let m = Measurement {
                time,
                digest,
                status,
                cached: false,
            };
            match trace.records.last_mut() {
                Some(last) if last.seq == seq => {
                    if last.config != config {
                        return Err(bad("configuration changes within one record"));
                    }
                    last.measurements.push((cols[3].to_string(), m));
                }
                _ => trace.records.push(TraceRecord {
                    seq,
                    config,
                    measurements: vec![(cols[3].to_string(), m)],
                    annotation: cols[7].to_string(),
                }),
            }
        }
        Ok(trace)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }
}
