use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::REFERENCE;
use crate::error::{Error, Result};
use crate::evaluator::Evaluator;
use crate::flagspace::Configuration;
use crate::search::{suite_combined_elimination, Campaign, CampaignTrace, SuiteCeParams};

/// Assignment of programs to test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Programs in the order given to [`make_folds`].
    pub programs: Vec<String>,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    /// Test programs of fold `x`, in program order.
    pub fn test(&self, x: usize) -> Vec<String> {
        self.programs
            .iter()
            .filter(|p| self.assignment[*p] == x)
            .cloned()
            .collect()
    }

    /// Training programs of fold `x`, in program order.
    pub fn training(&self, x: usize) -> Vec<String> {
        self.programs
            .iter()
            .filter(|p| self.assignment[*p] != x)
            .cloned()
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Uniformly random partition of `programs` into `k` folds whose sizes differ
/// by at most one.
pub fn make_folds(programs: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > programs.len() {
        return Err(Error::Analysis(format!(
            "k must be between 2 and the number of programs ({}), got {k}",
            programs.len()
        )));
    }
    let mut order: Vec<usize> = (0..programs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = BTreeMap::new();
    for (pos, &i) in order.iter().enumerate() {
        if assignment.insert(programs[i].clone(), pos % k).is_some() {
            return Err(Error::Analysis(format!("duplicate program {:?}", programs[i])));
        }
    }
    Ok(FoldPlan {
        k,
        programs: programs.to_vec(),
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct XvalFold {
    pub fold: usize,
    pub training: Vec<String>,
    pub test: Vec<String>,
    pub config: Configuration,
    /// Training-set aggregate reached by the search.
    pub training_aggregate: f64,
    /// Per test program, time under the trained configuration over time
    /// under the reference.
    pub ratios: Vec<(String, f64)>,
    pub training_trace: CampaignTrace,
    pub test_trace: CampaignTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XvalResult {
    pub folds: Vec<XvalFold>,
    /// Arithmetic mean over all test ratios.
    pub mean: f64,
}

impl XvalResult {
    /// Test ratios of every program, in fold order.
    pub fn ratios(&self) -> Vec<(String, f64)> {
        self.folds.iter().flat_map(|f| f.ratios.iter().cloned()).collect()
    }
}

fn in_fold(fold: usize, e: Error) -> Error {
    match e {
        Error::Interrupted { .. } => e,
        other => Error::Campaign(format!("fold {fold}: {other}")),
    }
}

/// For each fold, trains a configuration with suite-wide combined elimination
/// on the training programs only, then measures the reference and trained
/// configurations on the held-out programs.
pub fn run_xval(evaluator: &mut Evaluator, params: &SuiteCeParams, plan: &FoldPlan) -> Result<XvalResult> {
    let reference = match &params.baseline {
        Some(c) => c.clone(),
        None => evaluator.space().stock_baseline(),
    };
    let mut folds = Vec::with_capacity(plan.k);
    for x in 0..plan.k {
        let training = plan.training(x);
        let test = plan.test(x);

        let mut campaign = Campaign::new(evaluator).with_label(format!("xval fold {x} training"));
        let outcome = suite_combined_elimination(&mut campaign, &training, params).map_err(|e| in_fold(x, e))?;
        let training_trace = campaign.finish()?;

        let mut campaign = Campaign::new(evaluator).with_label(format!("xval fold {x} test"));
        let r = campaign
            .record(&reference, &test, REFERENCE, |_, _| false)
            .map_err(|e| in_fold(x, e))?;
        let t = campaign
            .record(&outcome.config, &test, format!("fold {x} configuration"), |_, _| false)
            .map_err(|e| in_fold(x, e))?;
        let mut ratios = Vec::with_capacity(test.len());
        for ((bench, rm), (_, tm)) in campaign
            .record_at(r)
            .measurements
            .iter()
            .zip(&campaign.record_at(t).measurements)
        {
            if !rm.is_ok() {
                return Err(in_fold(
                    x,
                    Error::Campaign(format!("{bench}: reference failed with {}", rm.status)),
                ));
            }
            ratios.push((bench.clone(), tm.time_or_inf() / rm.time_or_inf()));
        }
        let test_trace = campaign.finish()?;

        folds.push(XvalFold {
            fold: x,
            training,
            test,
            training_aggregate: outcome.aggregate(),
            config: outcome.config,
            ratios,
            training_trace,
            test_trace,
        });
    }
    let all: Vec<f64> = folds.iter().flat_map(|f| f.ratios.iter().map(|r| r.1)).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    Ok(XvalResult { folds, mean })
}
