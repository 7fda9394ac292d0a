//! Combined elimination for a single benchmark.
//!
//! Starting from every flag enabled, each round probes disabling every flag
//! still in the search space, applies the flag with the most negative RIP,
//! then re-probes the remaining negative-RIP flags one by one against the
//! updated baseline, applying each that still helps. The search ends when a
//! round finds no flag with negative RIP.

use serde::{Deserialize, Serialize};

use super::{rip_of, Campaign, CampaignTrace};
use crate::error::{Error, Result};
use crate::evaluator::{Evaluator, Measurement};
use crate::flagspace::Configuration;

/// Search state between steps, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeState {
    /// Flag indices still in the search space.
    pub space: Vec<usize>,
    pub baseline: Configuration,
    pub baseline_time: f64,
    /// Negative-RIP candidates of the current round, most negative first.
    pub candidates: Vec<(usize, f64)>,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeOutcome {
    pub config: Configuration,
    pub time: f64,
    /// Flags disabled, in the order they were applied.
    pub applied: Vec<usize>,
    pub rounds: usize,
}

/// Ascending by RIP, ties to the lower flag index.
pub(crate) fn sort_candidates(candidates: &mut [(usize, f64)]) {
    candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

/// Runs combined elimination for `bench` inside an existing campaign.
pub fn combined_elimination(campaign: &mut Campaign<'_>, bench: &str) -> Result<CeOutcome> {
    let space = campaign.space().clone();
    let benches = [bench.to_string()];
    let measured = |c: &Campaign<'_>, idx: usize| -> Measurement { c.record_at(idx).measurements[0].1.clone() };

    let mut baseline = space.all_enabled();
    let idx = campaign.record(&baseline, &benches, "baseline", |_, _| false)?;
    let mut base_m = measured(campaign, idx);
    if !base_m.is_ok() {
        return Err(Error::Campaign(format!(
            "{bench}: all-enabled baseline failed with {}",
            base_m.status
        )));
    }
    let mut state = CeState {
        space: (0..space.len()).collect(),
        baseline: baseline.clone(),
        baseline_time: base_m.time_or_inf(),
        candidates: Vec::new(),
        round: 0,
    };
    let mut applied = Vec::new();

    loop {
        state.round += 1;
        state.candidates.clear();
        campaign.set_state(&state);

        let probes: Vec<(Configuration, String)> = state
            .space
            .iter()
            .map(|&i| {
                debug_assert!(baseline.is_enabled(i));
                let probe = baseline.toggle(i).expect("flag index from the space");
                (probe, format!("probe {}", space.flags[i].name))
            })
            .collect();
        let records = campaign.record_many(&probes, &benches)?;

        let mut candidates: Vec<(usize, f64)> = state
            .space
            .iter()
            .zip(&records)
            .map(|(&i, &r)| (i, rip_of(&measured(campaign, r), &base_m)))
            .filter(|&(_, rip)| rip < 0.0)
            .collect();
        sort_candidates(&mut candidates);
        state.candidates = candidates.clone();
        campaign.set_state(&state);
        if candidates.is_empty() {
            break;
        }

        let (first, _) = candidates[0];
        let pos = state
            .space
            .iter()
            .position(|&i| i == first)
            .expect("candidate in space");
        baseline = probes[pos].0.clone();
        base_m = measured(campaign, records[pos]);
        campaign.annotate(records[pos], format!("accepted toggle {}", space.flags[first].name));
        state.space.retain(|&i| i != first);
        applied.push(first);

        for &(flag, _) in &candidates[1..] {
            let probe = baseline.toggle(flag).expect("flag index from the space");
            let name = &space.flags[flag].name;
            let r = campaign.record(&probe, &benches, format!("reprobe {name}"), |_, _| false)?;
            let m = measured(campaign, r);
            if rip_of(&m, &base_m) < 0.0 {
                baseline = probe;
                base_m = m;
                campaign.annotate(r, format!("accepted toggle {name}"));
                state.space.retain(|&i| i != flag);
                applied.push(flag);
            }
        }
        state.baseline = baseline.clone();
        state.baseline_time = base_m.time_or_inf();
    }

    Ok(CeOutcome {
        time: base_m.time_or_inf(),
        config: baseline,
        applied,
        rounds: state.round,
    })
}

/// Runs a complete combined-elimination campaign for one benchmark.
pub fn run_ce(evaluator: &mut Evaluator, bench: &str) -> Result<(Configuration, CampaignTrace)> {
    let mut campaign = Campaign::new(evaluator);
    let outcome = combined_elimination(&mut campaign, bench)?;
    Ok((outcome.config, campaign.finish()?))
}
