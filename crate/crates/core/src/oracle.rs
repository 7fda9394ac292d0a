//! Exhaustive enumeration over a synthetic model.
//!
//! Enumerates every base level and all 2ⁿ flag assignments directly against
//! the model's cost function. It shares nothing with the search code beyond
//! the model itself, which makes it the reference the searches are checked
//! against.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::SyntheticModel;
use crate::flagspace::Configuration;
use crate::search::Aggregate;

/// Refuse enumeration beyond this many flags unless told otherwise.
pub const DEFAULT_MAX_FLAGS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub config: Configuration,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteOptimum {
    pub config: Configuration,
    pub aggregate: f64,
    pub times: Vec<(String, f64)>,
}

fn check_size(model: &SyntheticModel, max_flags: usize) -> Result<()> {
    let n = model.space().len();
    if n > max_flags || n >= usize::BITS as usize {
        return Err(Error::Analysis(format!(
            "{n} flags exceed the enumeration cap of {max_flags}"
        )));
    }
    Ok(())
}

fn assignment(mask: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask & (1 << i) != 0).collect()
}

/// Every configuration in enumeration order: base levels in space order
/// (or only `level`), then assignments by ascending mask where bit `i` is
/// flag `i`.
fn configurations<'a>(model: &'a SyntheticModel, level: Option<&'a str>) -> impl Iterator<Item = Configuration> + 'a {
    let n = model.space().len();
    model
        .space()
        .base_levels
        .iter()
        .filter(move |l| level.is_none_or(|x| x == l.as_str()))
        .flat_map(move |l| (0..1usize << n).map(move |mask| Configuration::new(l.clone(), assignment(mask, n))))
}

/// Fastest configuration for `bench`, optionally restricted to one base
/// level. Ties go to the first configuration in enumeration order.
pub fn optimum(model: &SyntheticModel, bench: &str, level: Option<&str>, max_flags: usize) -> Result<Optimum> {
    check_size(model, max_flags)?;
    if let Some(l) = level {
        if !model.space().has_level(l) {
            return Err(Error::Analysis(format!("unknown base level {l:?}")));
        }
    }
    let mut best: Option<Optimum> = None;
    for config in configurations(model, level) {
        let time = model.time(&config, bench)?;
        if best.as_ref().is_none_or(|b| time < b.time) {
            best = Some(Optimum { config, time });
        }
    }
    Ok(best.expect("at least one configuration"))
}

/// Best aggregate over configurations that keep every benchmark within
/// `(1 + threshold/100)` of its time under `reference`. Ties go to the first
/// configuration in enumeration order.
pub fn suite_optimum(
    model: &SyntheticModel,
    suite: &[String],
    reference: &Configuration,
    threshold: f64,
    aggregate: Aggregate,
    max_flags: usize,
) -> Result<SuiteOptimum> {
    check_size(model, max_flags)?;
    let ref_times = suite
        .iter()
        .map(|b| model.time(reference, b))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<SuiteOptimum> = None;
    for config in configurations(model, None) {
        let times = suite
            .iter()
            .map(|b| model.time(&config, b))
            .collect::<Result<Vec<_>>>()?;
        let feasible = times
            .iter()
            .zip(&ref_times)
            .all(|(t, r)| *t <= (1.0 + threshold / 100.0) * r);
        if !feasible {
            continue;
        }
        let ratios: Vec<f64> = times.iter().zip(&ref_times).map(|(t, r)| t / r).collect();
        let agg = aggregate.combine(&ratios);
        if best.as_ref().is_none_or(|b| agg < b.aggregate) {
            best = Some(SuiteOptimum {
                config,
                aggregate: agg,
                times: suite.iter().cloned().zip(times).collect(),
            });
        }
    }
    // The reference itself is always feasible.
    Ok(best.expect("reference configuration is feasible"))
}
