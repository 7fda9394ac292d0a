//! Search strategies over flag configurations.
//!
//! * [`ric`]: random iterative compilation, uniform sampling of base level and
//!   flag settings.
//! * [`ce`]: combined elimination for a single benchmark.
//! * [`suite_ce`]: combined elimination against a whole suite under a
//!   per-benchmark slowdown threshold, producing one configuration for the
//!   platform.

mod campaign;
pub mod ce;
pub mod ric;
pub mod suite_ce;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::Measurement;
use crate::flagspace::Configuration;

pub use campaign::{Campaign, Checkpoint, StopPolicy};
pub use ce::{combined_elimination, run_ce, CeOutcome, CeState};
pub use ric::{random_iterative, run_ric, sample_ric};
pub use suite_ce::{run_suite_ce, suite_combined_elimination, SuiteCeOutcome, SuiteCeParams, SuiteCeState};
pub use trace::{CampaignTrace, TraceRecord};

/// Relative improvement percentage of a toggled configuration over a base:
/// `(t_toggled - t_base) / t_base * 100`. Negative means the toggle helped.
pub fn rip(t_toggled: f64, t_base: f64) -> f64 {
    (t_toggled - t_base) / t_base * 100.0
}

/// [`rip`] over measurements; any failed side yields `+inf`.
pub fn rip_of(toggled: &Measurement, base: &Measurement) -> f64 {
    match (toggled.time, base.time) {
        (Some(t), Some(b)) if toggled.is_ok() && base.is_ok() && b > 0.0 => rip(t, b),
        _ => f64::INFINITY,
    }
}

/// Suite objective over per-benchmark ratios `time / reference time`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    #[default]
    Mean,
    GeoMean,
}

impl Aggregate {
    pub fn combine(self, ratios: &[f64]) -> f64 {
        if ratios.is_empty() {
            return 1.0;
        }
        let n = ratios.len() as f64;
        match self {
            Aggregate::Mean => ratios.iter().sum::<f64>() / n,
            Aggregate::GeoMean => (ratios.iter().map(|r| r.ln()).sum::<f64>() / n).exp(),
        }
    }
}

impl std::str::FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "geomean" => Ok(Aggregate::GeoMean),
            other => Err(Error::Structural(format!("unknown aggregate {other:?}"))),
        }
    }
}

/// The best measurement of one benchmark across several campaigns.
#[derive(Debug, Clone, PartialEq)]
pub struct BestKnown {
    pub measurement: Measurement,
    pub config: Configuration,
    pub seq: usize,
    /// Index of the originating trace in the input list.
    pub trace: usize,
}

/// Minimum-time ok measurement of `bench` over `traces`; ties go to the
/// earliest sequence number, then the earlier trace.
pub fn best_known(traces: &[&CampaignTrace], bench: &str) -> Result<BestKnown> {
    let mut best: Option<BestKnown> = None;
    for (t, trace) in traces.iter().enumerate() {
        for r in &trace.records {
            let Some(m) = r.measurement(bench).filter(|m| m.is_ok()) else {
                continue;
            };
            let time = m.time_or_inf();
            let better = match &best {
                None => true,
                Some(b) => {
                    let bt = b.measurement.time_or_inf();
                    time < bt || (time == bt && r.seq < b.seq)
                }
            };
            if better {
                best = Some(BestKnown {
                    measurement: m.clone(),
                    config: r.config.clone(),
                    seq: r.seq,
                    trace: t,
                });
            }
        }
    }
    best.ok_or_else(|| Error::Analysis(format!("no ok measurement for {bench:?}")))
}
