//! Random iterative compilation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Campaign, CampaignTrace};
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::flagspace::{Configuration, FlagSpace};

// Samples are evaluated in chunks so external compilation can overlap.
const CHUNK: usize = 32;

/// Draws the `draw`-th random configuration for `seed`: a base level chosen
/// uniformly, and each flag enabled independently with probability 1/2.
pub fn sample_ric(space: &FlagSpace, seed: u64, draw: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let level = &space.base_levels[rng.gen_range(0..space.base_levels.len())];
    let assignment = (0..space.len()).map(|_| rng.gen_bool(0.5)).collect();
    Configuration::new(level.clone(), assignment)
}

/// Evaluates the stock baseline and then `n_configs` random samples on every
/// target, inside an existing campaign.
pub fn random_iterative(campaign: &mut Campaign<'_>, targets: &[String], n_configs: usize, seed: u64) -> Result<()> {
    if n_configs == 0 {
        return Err(Error::Campaign("n_configs must be at least 1".into()));
    }
    let stock = campaign.space().stock_baseline();
    campaign.record(&stock, targets, "reference", |_, _| false)?;
    let space = campaign.space().clone();
    let mut draw = 0;
    while draw < n_configs {
        let end = (draw + CHUNK).min(n_configs);
        let items: Vec<(Configuration, String)> = (draw..end)
            .map(|d| (sample_ric(&space, seed, d as u64), format!("sample {d}")))
            .collect();
        campaign.set_state(&serde_json::json!({ "next_draw": draw }));
        campaign.record_many(&items, targets)?;
        draw = end;
    }
    Ok(())
}

/// Runs a complete random-sampling campaign and returns its trace
/// (`n_configs + 1` records, the stock baseline first).
pub fn run_ric(evaluator: &mut Evaluator, targets: &[String], n_configs: usize, seed: u64) -> Result<CampaignTrace> {
    let mut campaign = Campaign::new(evaluator);
    random_iterative(&mut campaign, targets, n_configs, seed)?;
    campaign.finish()
}
