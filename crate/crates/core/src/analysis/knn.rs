use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flagspace::Configuration;
use crate::search::CampaignTrace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVector {
    pub program: String,
    pub features: Vec<f64>,
}

/// Reads a feature table: a header row, then one row per program with the
/// program name followed by numeric columns. Tab-delimited when the header
/// contains a tab, comma-delimited otherwise.
pub fn parse_features(text: &str) -> Result<Vec<FeatureVector>> {
    let header = text.lines().find(|l| !l.starts_with('#') && !l.trim().is_empty());
    let delimiter = if header.is_some_and(|l| l.contains('\t')) {
        b'\t'
    } else {
        b','
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let width = reader
        .headers()
        .map_err(|e| Error::Analysis(format!("feature table: {e}")))?
        .len();
    if width < 2 {
        return Err(Error::Analysis(
            "feature table needs a name column and at least one feature".into(),
        ));
    }
    let mut out: Vec<FeatureVector> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Analysis(format!("feature table: {e}")))?;
        let program = row[0].to_string();
        let features = row
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Analysis(format!("feature table: non-numeric value for {program:?}")))?;
        if out.iter().any(|f| f.program == program) {
            return Err(Error::Analysis(format!("feature table: duplicate program {program:?}")));
        }
        out.push(FeatureVector { program, features });
    }
    Ok(out)
}

/// Measured times of one program under the configurations tried for it.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PerformanceTable {
    pub entries: Vec<(Configuration, f64)>,
}

impl PerformanceTable {
    /// Fastest entry; ties go to the earliest.
    pub fn best(&self) -> Option<&(Configuration, f64)> {
        self.entries
            .iter()
            .fold(None, |best: Option<&(Configuration, f64)>, e| match best {
                Some(b) if b.1 <= e.1 => Some(b),
                _ => Some(e),
            })
    }
}

/// Per-benchmark tables of every ok measurement in `traces`, in trace order.
pub fn performance_tables(traces: &[&CampaignTrace]) -> BTreeMap<String, PerformanceTable> {
    let mut out: BTreeMap<String, PerformanceTable> = BTreeMap::new();
    for trace in traces {
        for r in &trace.records {
            for (bench, m) in &r.measurements {
                if let (true, Some(t)) = (m.is_ok(), m.time) {
                    out.entry(bench.clone())
                        .or_default()
                        .entries
                        .push((r.config.clone(), t));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Scaling {
    /// Per-feature z-score with training-set statistics; constant features
    /// are ignored.
    #[default]
    ZScore,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub neighbor: String,
    pub distance: f64,
    pub config: Configuration,
    /// The neighbor's time under `config`.
    pub time: f64,
}

/// Nearest training program by Euclidean distance over z-scored features;
/// returns its best configuration.
pub fn predict_1nn(query: &FeatureVector, training: &[(FeatureVector, PerformanceTable)]) -> Result<Prediction> {
    predict_1nn_with(query, training, Scaling::ZScore)
}

pub fn predict_1nn_with(
    query: &FeatureVector,
    training: &[(FeatureVector, PerformanceTable)],
    scaling: Scaling,
) -> Result<Prediction> {
    let Some((first, _)) = training.first() else {
        return Err(Error::Analysis("empty training set".into()));
    };
    let dim = first.features.len();
    for f in std::iter::once(query).chain(training.iter().map(|(f, _)| f)) {
        if f.features.len() != dim {
            return Err(Error::Analysis(format!(
                "{:?} has {} features, expected {dim}",
                f.program,
                f.features.len()
            )));
        }
    }

    let n = training.len() as f64;
    let (mean, scale): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|j| match scaling {
            Scaling::Raw => (0.0, 1.0),
            Scaling::ZScore => {
                let mean = training.iter().map(|(f, _)| f.features[j]).sum::<f64>() / n;
                let var = training
                    .iter()
                    .map(|(f, _)| (f.features[j] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                let std = var.sqrt();
                // A constant feature carries no information; weight it zero.
                (mean, if std > 0.0 { 1.0 / std } else { 0.0 })
            }
        })
        .unzip();
    let normalize = |x: &[f64]| -> Vec<f64> { (0..dim).map(|j| (x[j] - mean[j]) * scale[j]).collect() };

    let q = normalize(&query.features);
    let mut nearest: Option<(usize, f64)> = None;
    for (i, (f, _)) in training.iter().enumerate() {
        let d = normalize(&f.features)
            .iter()
            .zip(&q)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        if nearest.is_none_or(|(_, best)| d < best) {
            nearest = Some((i, d));
        }
    }
    let (i, distance) = nearest.expect("training set is non-empty");
    let (features, table) = &training[i];
    let (config, time) = table
        .best()
        .ok_or_else(|| Error::Analysis(format!("no measurements for nearest program {:?}", features.program)))?;
    Ok(Prediction {
        neighbor: features.program.clone(),
        distance,
        config: config.clone(),
        time: *time,
    })
}
