//! Summaries of campaign traces: best-so-far progress series, per-benchmark
//! comparison against the stock baseline, k-fold cross-validation of
//! suite-wide configurations, and nearest-neighbor configuration prediction.

mod knn;
mod xval;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flagspace::Configuration;
use crate::search::{best_known, CampaignTrace};

pub use knn::{
    parse_features, performance_tables, predict_1nn, predict_1nn_with, FeatureVector, PerformanceTable, Prediction,
    Scaling,
};
pub use xval::{make_folds, run_xval, FoldPlan, XvalFold, XvalResult};

/// Annotation of records measuring the stock baseline.
pub const REFERENCE: &str = "reference";

/// Per-benchmark reference times, keyed by benchmark name.
pub type ReferenceTimes = BTreeMap<String, f64>;

/// Collects reference times from records annotated [`REFERENCE`]. The first
/// ok measurement of each benchmark wins.
pub fn reference_times(traces: &[&CampaignTrace]) -> Result<ReferenceTimes> {
    let mut out = ReferenceTimes::new();
    for trace in traces {
        for r in trace.records.iter().filter(|r| r.annotation == REFERENCE) {
            for (bench, m) in &r.measurements {
                if let (true, Some(t)) = (m.is_ok(), m.time) {
                    out.entry(bench.clone()).or_insert(t);
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Analysis(format!("no records annotated {REFERENCE:?}")));
    }
    Ok(out)
}

/// Parses `benchmark<TAB>time` lines; `#` starts a comment line.
pub fn parse_reference(text: &str) -> Result<ReferenceTimes> {
    let mut out = ReferenceTimes::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Analysis(format!("reference line {}: expected benchmark and time", n + 1));
        let (bench, time) = line.split_once('\t').ok_or_else(bad)?;
        let time: f64 = time.trim().parse().map_err(|_| bad())?;
        out.insert(bench.to_string(), time);
    }
    Ok(out)
}

fn check_reference(reference: &ReferenceTimes, benches: &[String]) -> Result<()> {
    for b in benches {
        match reference.get(b) {
            Some(t) if t.is_finite() && *t > 0.0 => {}
            Some(t) => {
                return Err(Error::Analysis(format!(
                    "reference time for {b:?} must be positive, got {t}"
                )))
            }
            None => return Err(Error::Analysis(format!("no reference time for {b:?}"))),
        }
    }
    Ok(())
}

/// Values indexed by number of configurations tested.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeSeries {
    pub points: Vec<(usize, f64)>,
    /// What each value is relative to.
    pub description: String,
}

impl RelativeSeries {
    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }

    /// Two-column plot data.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("# {}\n# configs_tested\tvalue\n", self.description);
        for (c, v) in &self.points {
            writeln!(out, "{c}\t{v}").expect("writing to a string");
        }
        out
    }
}

/// After each tested configuration, the mean over the reference benchmarks of
/// `min(1, best time so far / reference time)`. Benchmarks without an ok
/// measurement yet count as 1.
pub fn floored_best_so_far(trace: &CampaignTrace, reference: &ReferenceTimes) -> Result<RelativeSeries> {
    if trace.is_empty() {
        return Err(Error::Analysis("empty trace".into()));
    }
    check_reference(reference, &trace.benchmarks())?;
    let names: Vec<&String> = reference.keys().collect();
    let mut best = vec![f64::INFINITY; names.len()];
    let mut points = Vec::with_capacity(trace.len());
    for (c, r) in trace.records.iter().enumerate() {
        for (i, name) in names.iter().enumerate() {
            if let Some(m) = r.measurement(name).filter(|m| m.is_ok()) {
                best[i] = best[i].min(m.time_or_inf());
            }
        }
        let sum: f64 = names
            .iter()
            .zip(&best)
            .map(|(n, b)| (b / reference[n.as_str()]).min(1.0))
            .sum();
        points.push((c + 1, sum / names.len() as f64));
    }
    Ok(RelativeSeries {
        points,
        description: "mean best-so-far time relative to reference, floored at 1.0".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub benchmark: String,
    pub reference: f64,
    pub best: f64,
    /// Unfloored: above 1 when every campaign was slower than the reference.
    pub ratio: f64,
    pub config: Configuration,
    /// Label of the campaign that found the best time.
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub mean: f64,
    pub mean_floored: f64,
}

impl Comparison {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# benchmark\treference\tbest\tratio\tbase_level\tbitstring\tmethod\n");
        for r in &self.rows {
            let bits = r.config.bitstring();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.benchmark,
                r.reference,
                r.best,
                r.ratio,
                r.config.base_level,
                if bits.is_empty() { "-" } else { &bits },
                r.method
            )
            .expect("writing to a string");
        }
        writeln!(out, "# mean ratio (unfloored)\t{}", self.mean).expect("writing to a string");
        writeln!(out, "# mean ratio (floored)\t{}", self.mean_floored).expect("writing to a string");
        out
    }
}

/// Best-known time per reference benchmark across labeled campaigns, with the
/// arithmetic mean of the ratios. Benchmarks no campaign measured are an error.
pub fn compare_to_baseline(traces: &[(String, &CampaignTrace)], reference: &ReferenceTimes) -> Result<Comparison> {
    let names: Vec<String> = reference.keys().cloned().collect();
    check_reference(reference, &names)?;
    let plain: Vec<&CampaignTrace> = traces.iter().map(|(_, t)| *t).collect();
    let mut rows = Vec::with_capacity(names.len());
    for bench in names {
        let best = best_known(&plain, &bench)?;
        let time = best.measurement.time_or_inf();
        let reference = reference[&bench];
        rows.push(ComparisonRow {
            ratio: time / reference,
            reference,
            best: time,
            config: best.config,
            method: traces[best.trace].0.clone(),
            benchmark: bench,
        });
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.ratio).sum::<f64>() / n;
    let mean_floored = rows.iter().map(|r| r.ratio.min(1.0)).sum::<f64>() / n;
    Ok(Comparison {
        rows,
        mean,
        mean_floored,
    })
}
