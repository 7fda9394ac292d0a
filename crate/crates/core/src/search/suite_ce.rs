//! Combined elimination over a whole benchmark suite.
//!
//! The search starts from a reference configuration (the stock optimization
//! level by default) and may flip any flag in either direction. A candidate is
//! only eligible when no benchmark runs slower than `(1 + t/100)` times its
//! reference time; evaluation of a candidate stops at the first benchmark
//! that breaks this limit. Eligible candidates are ranked by the RIP of the
//! suite aggregate (mean of per-benchmark time ratios by default).

use serde::{Deserialize, Serialize};

use super::ce::sort_candidates;
use super::{rip, Aggregate, Campaign, CampaignTrace};
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::flagspace::Configuration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCeParams {
    /// Maximum tolerated per-benchmark slowdown, in percent.
    pub threshold: f64,
    /// Starting configuration; the stock default baseline when `None`.
    pub baseline: Option<Configuration>,
    pub aggregate: Aggregate,
}

impl SuiteCeParams {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            baseline: None,
            aggregate: Aggregate::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCeState {
    pub space: Vec<usize>,
    pub baseline: Configuration,
    pub aggregate: f64,
    pub candidates: Vec<(usize, f64)>,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteCeOutcome {
    pub config: Configuration,
    /// Per-benchmark reference times, suite order.
    pub reference: Vec<(String, f64)>,
    /// Per-benchmark times of the final configuration, suite order.
    pub times: Vec<(String, f64)>,
    /// Aggregate objective of the starting point and after each applied toggle.
    pub history: Vec<f64>,
    /// Flags toggled, in the order they were applied.
    pub applied: Vec<usize>,
    /// Candidates abandoned by the threshold check.
    pub skipped: usize,
    pub rounds: usize,
}

impl SuiteCeOutcome {
    pub fn aggregate(&self) -> f64 {
        *self.history.last().expect("history starts with the baseline")
    }

    pub fn ratios(&self) -> Vec<(String, f64)> {
        self.times
            .iter()
            .zip(&self.reference)
            .map(|((b, t), (_, r))| (b.clone(), t / r))
            .collect()
    }
}

struct Probe {
    record: usize,
    config: Configuration,
    /// `None` when the candidate was abandoned.
    times: Option<Vec<f64>>,
}

fn probe(
    campaign: &mut Campaign<'_>,
    config: Configuration,
    suite: &[String],
    limits: &[f64],
    annotation: String,
) -> Result<Probe> {
    let record = campaign.record(&config, suite, annotation, |i, m| {
        !m.is_ok() || m.time_or_inf() > limits[i]
    })?;
    let r = campaign.record_at(record);
    let within = r.measurements.len() == suite.len()
        && r.measurements
            .iter()
            .zip(limits)
            .all(|((_, m), &limit)| m.is_ok() && m.time_or_inf() <= limit);
    let times = within.then(|| r.measurements.iter().map(|(_, m)| m.time_or_inf()).collect());
    Ok(Probe { record, config, times })
}

/// Runs suite-wide combined elimination inside an existing campaign.
pub fn suite_combined_elimination(
    campaign: &mut Campaign<'_>,
    suite: &[String],
    params: &SuiteCeParams,
) -> Result<SuiteCeOutcome> {
    if !(params.threshold >= 0.0 && params.threshold.is_finite()) {
        return Err(Error::Campaign(format!(
            "threshold must be >= 0, got {}",
            params.threshold
        )));
    }
    if suite.is_empty() {
        return Err(Error::Campaign("empty benchmark suite".into()));
    }
    let space = campaign.space().clone();
    let start = match &params.baseline {
        Some(c) => {
            space.check(c)?;
            c.clone()
        }
        None => space.stock_baseline(),
    };

    let idx = campaign.record(&start, suite, "reference", |_, _| false)?;
    let mut reference = Vec::with_capacity(suite.len());
    for (bench, m) in &campaign.record_at(idx).measurements {
        if !m.is_ok() {
            return Err(Error::Campaign(format!(
                "{bench}: reference configuration failed with {}",
                m.status
            )));
        }
        reference.push(m.time_or_inf());
    }
    let limits: Vec<f64> = reference.iter().map(|r| (1.0 + params.threshold / 100.0) * r).collect();
    let objective = |times: &[f64]| -> f64 {
        let ratios: Vec<f64> = times.iter().zip(&reference).map(|(t, r)| t / r).collect();
        params.aggregate.combine(&ratios)
    };

    let mut baseline = start;
    let mut times = reference.clone();
    let mut current = objective(&times);
    let mut history = vec![current];
    let mut applied = Vec::new();
    let mut skipped = 0;
    let mut state = SuiteCeState {
        space: (0..space.len()).collect(),
        baseline: baseline.clone(),
        aggregate: current,
        candidates: Vec::new(),
        round: 0,
    };

    loop {
        state.round += 1;
        state.candidates.clear();
        campaign.set_state(&state);

        let mut probes = Vec::with_capacity(state.space.len());
        for &i in &state.space {
            let candidate = baseline.toggle(i).expect("flag index from the space");
            let p = probe(
                campaign,
                candidate,
                suite,
                &limits,
                format!("probe {}", space.flags[i].name),
            )?;
            if p.times.is_none() {
                skipped += 1;
            }
            probes.push((i, p));
        }

        let mut candidates: Vec<(usize, f64)> = probes
            .iter()
            .filter_map(|(i, p)| p.times.as_ref().map(|t| (*i, rip(objective(t), current))))
            .filter(|&(_, r)| r < 0.0)
            .collect();
        sort_candidates(&mut candidates);
        state.candidates = candidates.clone();
        campaign.set_state(&state);
        if candidates.is_empty() {
            break;
        }

        let (first, _) = candidates[0];
        let (_, p) = probes.iter().find(|(i, _)| *i == first).expect("candidate was probed");
        baseline = p.config.clone();
        times = p.times.clone().expect("eligible candidate");
        current = objective(&times);
        history.push(current);
        campaign.annotate(p.record, format!("accepted toggle {}", space.flags[first].name));
        state.space.retain(|&i| i != first);
        applied.push(first);

        for &(flag, _) in &candidates[1..] {
            let candidate = baseline.toggle(flag).expect("flag index from the space");
            let name = &space.flags[flag].name;
            let p = probe(campaign, candidate, suite, &limits, format!("reprobe {name}"))?;
            match &p.times {
                Some(t) if rip(objective(t), current) < 0.0 => {
                    baseline = p.config.clone();
                    times = t.clone();
                    current = objective(&times);
                    history.push(current);
                    campaign.annotate(p.record, format!("accepted toggle {name}"));
                    state.space.retain(|&i| i != flag);
                    applied.push(flag);
                }
                Some(_) => {}
                None => skipped += 1,
            }
        }
        state.baseline = baseline.clone();
        state.aggregate = current;
    }

    Ok(SuiteCeOutcome {
        config: baseline,
        reference: suite.iter().cloned().zip(reference).collect(),
        times: suite.iter().cloned().zip(times).collect(),
        history,
        applied,
        skipped,
        rounds: state.round,
    })
}

/// Runs a complete suite-wide campaign.
pub fn run_suite_ce(
    evaluator: &mut Evaluator,
    suite: &[String],
    params: &SuiteCeParams,
) -> Result<(SuiteCeOutcome, CampaignTrace)> {
    let mut campaign = Campaign::new(evaluator);
    let outcome = suite_combined_elimination(&mut campaign, suite, params)?;
    Ok((outcome, campaign.finish()?))
}
