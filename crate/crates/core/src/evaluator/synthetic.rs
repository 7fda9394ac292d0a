//! Deterministic cost model standing in for real hardware.
//!
//! A modeled time is
//! `base_time × level_multiplier(base) + Σ per-flag deltas + Σ matching pair deltas`,
//! where each flag contributes its `flag_delta` when enabled and its
//! `flag_delta_disabled` when disabled.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Artifact, Backend, DigestAlgo, Measurement, RunOutcome};
use crate::error::{Error, Result};
use crate::flagspace::{Configuration, FlagSpace};

/// Joint on/off state of a flag pair, in the order the pair is listed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointState {
    BothEnabled,
    BothDisabled,
    FirstOnly,
    SecondOnly,
}

impl JointState {
    fn matches(self, first: bool, second: bool) -> bool {
        match self {
            JointState::BothEnabled => first && second,
            JointState::BothDisabled => !first && !second,
            JointState::FirstOnly => first && !second,
            JointState::SecondOnly => !first && second,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub flags: [String; 2],
    pub state: JointState,
    pub delta: f64,
}

/// Per-benchmark model parameters as written in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBenchmark {
    pub name: String,
    pub base_time: f64,
    /// Missing levels use a factor of 1.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub level_multiplier: BTreeMap<String, f64>,
    /// Seconds added when the flag is enabled.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flag_delta: BTreeMap<String, f64>,
    /// Seconds added when the flag is disabled.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flag_delta_disabled: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair_delta: Vec<PairDelta>,
}

impl ModelBenchmark {
    pub fn new(name: impl Into<String>, base_time: f64) -> Self {
        Self {
            name: name.into(),
            base_time,
            level_multiplier: BTreeMap::new(),
            flag_delta: BTreeMap::new(),
            flag_delta_disabled: BTreeMap::new(),
            pair_delta: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    benchmarks: Vec<ModelBenchmark>,
}

#[derive(Debug, Clone)]
struct Resolved {
    multiplier: Vec<f64>,
    on: Vec<f64>,
    off: Vec<f64>,
    pairs: Vec<(usize, usize, JointState, f64)>,
}

/// A synthetic model resolved against a flag space.
#[derive(Debug, Clone)]
pub struct SyntheticModel {
    space: Arc<FlagSpace>,
    benchmarks: Vec<ModelBenchmark>,
    resolved: Vec<Resolved>,
    digest_algo: DigestAlgo,
}

impl SyntheticModel {
    pub fn new(space: FlagSpace, benchmarks: Vec<ModelBenchmark>) -> Result<Self> {
        let mut names = std::collections::HashSet::new();
        for b in &benchmarks {
            if !names.insert(b.name.as_str()) {
                return Err(Error::Model(format!("duplicate benchmark {:?}", b.name)));
            }
        }
        let resolved = benchmarks
            .iter()
            .map(|b| resolve(&space, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            space: Arc::new(space),
            benchmarks,
            resolved,
            digest_algo: DigestAlgo::Md5,
        })
    }

    pub fn parse(document: &str, space: FlagSpace) -> Result<Self> {
        let doc: ModelDocument =
            toml::from_str(document).map_err(|e| Error::Model(format!("malformed document: {e}")))?;
        Self::new(space, doc.benchmarks)
    }

    pub fn load(path: &Path, space: FlagSpace) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, space)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ModelDocument {
            benchmarks: self.benchmarks.clone(),
        })
        .expect("model serializes")
    }

    pub fn with_digest_algo(mut self, algo: DigestAlgo) -> Self {
        self.digest_algo = algo;
        self
    }

    pub fn space(&self) -> &FlagSpace {
        &self.space
    }

    pub fn benchmark_names(&self) -> Vec<String> {
        self.benchmarks.iter().map(|b| b.name.clone()).collect()
    }

    pub fn benchmarks(&self) -> &[ModelBenchmark] {
        &self.benchmarks
    }

    fn index(&self, bench: &str) -> Result<usize> {
        self.benchmarks
            .iter()
            .position(|b| b.name == bench)
            .ok_or_else(|| Error::Model(format!("benchmark {bench:?} is not modeled")))
    }

    /// Modeled execution time in seconds.
    pub fn time(&self, config: &Configuration, bench: &str) -> Result<f64> {
        let i = self.index(bench)?;
        self.space.check(config)?;
        let level = self
            .space
            .base_levels
            .iter()
            .position(|l| *l == config.base_level)
            .expect("checked above");
        let r = &self.resolved[i];
        let mut time = self.benchmarks[i].base_time * r.multiplier[level];
        for (flag, &enabled) in config.assignment.iter().enumerate() {
            time += if enabled { r.on[flag] } else { r.off[flag] };
        }
        for &(a, b, state, delta) in &r.pairs {
            if state.matches(config.assignment[a], config.assignment[b]) {
                time += delta;
            }
        }
        Ok(time)
    }

    /// Measurement for `config` on `bench`: always ok, digest taken over the
    /// configuration key.
    pub fn evaluate(&self, config: &Configuration, bench: &str) -> Result<Measurement> {
        let time = self.time(config, bench)?;
        Ok(Measurement::ok(time, self.digest_algo.digest(config.key().as_bytes())))
    }
}

fn resolve(space: &FlagSpace, b: &ModelBenchmark) -> Result<Resolved> {
    let bad = |what: String| Error::Model(format!("benchmark {:?}: {what}", b.name));
    if !(b.base_time.is_finite() && b.base_time > 0.0) {
        return Err(bad(format!("base_time must be positive, got {}", b.base_time)));
    }
    let flag = |name: &str| {
        space
            .flag_index(name)
            .ok_or_else(|| bad(format!("unknown flag {name:?}")))
    };

    for (level, m) in &b.level_multiplier {
        if !space.has_level(level) {
            return Err(bad(format!("unknown base level {level:?}")));
        }
        if !(m.is_finite() && *m > 0.0) {
            return Err(bad(format!("level multiplier for {level} must be positive")));
        }
    }
    let multiplier: Vec<f64> = space
        .base_levels
        .iter()
        .map(|l| b.level_multiplier.get(l).copied().unwrap_or(1.0))
        .collect();

    let mut on = vec![0.0; space.len()];
    let mut off = vec![0.0; space.len()];
    for (name, d) in &b.flag_delta {
        on[flag(name)?] = finite(*d).ok_or_else(|| bad(format!("non-finite delta for {name}")))?;
    }
    for (name, d) in &b.flag_delta_disabled {
        off[flag(name)?] = finite(*d).ok_or_else(|| bad(format!("non-finite delta for {name}")))?;
    }
    let mut pairs = Vec::with_capacity(b.pair_delta.len());
    for p in &b.pair_delta {
        let (x, y) = (flag(&p.flags[0])?, flag(&p.flags[1])?);
        if x == y {
            return Err(bad(format!("pair term uses {:?} twice", p.flags[0])));
        }
        let d = finite(p.delta).ok_or_else(|| bad("non-finite pair delta".into()))?;
        pairs.push((x, y, p.state, d));
    }

    // Interval bound: the smallest reachable time is at least the base term
    // plus every negative contribution.
    let negative: f64 = on
        .iter()
        .zip(&off)
        .map(|(a, b)| a.min(*b).min(0.0))
        .chain(pairs.iter().map(|p| p.3.min(0.0)))
        .sum();
    for (level, m) in space.base_levels.iter().zip(&multiplier) {
        let floor = b.base_time * m + negative;
        if floor <= 0.0 {
            return Err(bad(format!(
                "time can reach {floor} at level {level}; every modeled time must stay positive"
            )));
        }
    }
    Ok(Resolved {
        multiplier,
        on,
        off,
        pairs,
    })
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Backend that evaluates configurations against a [`SyntheticModel`].
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    model: SyntheticModel,
}

impl SyntheticBackend {
    pub fn new(model: SyntheticModel) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &SyntheticModel {
        &self.model
    }
}

impl Backend for SyntheticBackend {
    fn space(&self) -> &FlagSpace {
        self.model.space()
    }

    fn benchmarks(&self) -> Vec<String> {
        self.model.benchmark_names()
    }

    fn has_benchmark(&self, bench: &str) -> bool {
        self.model.benchmarks.iter().any(|b| b.name == bench)
    }

    fn compile(&self, config: &Configuration, _bench: &str) -> std::result::Result<Artifact, String> {
        let digest = self.model.digest_algo.digest(config.key().as_bytes());
        Ok(Artifact::synthetic(digest, config.clone()))
    }

    fn run(&self, artifact: &Artifact, bench: &str) -> RunOutcome {
        match self.model.time(&artifact.config, bench) {
            Ok(t) => RunOutcome::Time(t),
            Err(e) => RunOutcome::Failed(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flagspace::FlagDescriptor;

    fn space(n: usize) -> FlagSpace {
        let flags = (1..=n).map(|i| FlagDescriptor::gcc(&format!("F{i}"))).collect();
        FlagSpace::new(vec!["O1".into(), "O2".into(), "O3".into()], "O3", flags).unwrap()
    }

    #[test]
    fn zero_deltas_give_base_time() {
        let model = SyntheticModel::new(space(2), vec![ModelBenchmark::new("b", 100.0)]).unwrap();
        for bits in ["00", "01", "10", "11"] {
            for level in ["O1", "O2", "O3"] {
                let c = Configuration::from_bitstring(level, bits).unwrap();
                assert_eq!(model.time(&c, "b").unwrap(), 100.0);
            }
        }
    }

    #[test]
    fn enabled_deltas_are_added() {
        let mut b = ModelBenchmark::new("b", 100.0);
        b.flag_delta.insert("F1".into(), 10.0);
        b.flag_delta.insert("F2".into(), -5.0);
        let model = SyntheticModel::new(space(2), vec![b]).unwrap();
        let both = Configuration::from_bitstring("O3", "11").unwrap();
        assert_eq!(model.time(&both, "b").unwrap(), 105.0);
    }

    #[test]
    fn pair_dependency_instance() {
        let mut b = ModelBenchmark::new("cover", 100.0);
        b.flag_delta_disabled.insert("F1".into(), 5.0);
        b.flag_delta_disabled.insert("F2".into(), 5.0);
        b.pair_delta.push(PairDelta {
            flags: ["F1".into(), "F2".into()],
            state: JointState::BothDisabled,
            delta: -20.0,
        });
        let model = SyntheticModel::new(space(2), vec![b]).unwrap();
        let t = |bits: &str| {
            model
                .time(&Configuration::from_bitstring("O3", bits).unwrap(), "cover")
                .unwrap()
        };
        assert_eq!(t("00"), 90.0);
        assert_eq!(t("01"), 105.0);
        assert_eq!(t("10"), 105.0);
        assert_eq!(t("11"), 100.0);
    }

    #[test]
    fn level_multiplier_scales_base_only() {
        let mut b = ModelBenchmark::new("b", 100.0);
        b.level_multiplier.insert("O1".into(), 1.5);
        b.flag_delta.insert("F1".into(), 2.0);
        let model = SyntheticModel::new(space(1), vec![b]).unwrap();
        let c = Configuration::from_bitstring("O1", "1").unwrap();
        assert_eq!(model.time(&c, "b").unwrap(), 152.0);
    }

    #[test]
    fn evaluate_is_deterministic() {
        let mut b = ModelBenchmark::new("b", 3.0);
        b.flag_delta.insert("F2".into(), 0.1);
        let model = SyntheticModel::new(space(3), vec![b]).unwrap();
        let c = Configuration::from_bitstring("O2", "011").unwrap();
        let m1 = model.evaluate(&c, "b").unwrap();
        let m2 = model.evaluate(&c, "b").unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1.time.unwrap().to_bits(), m2.time.unwrap().to_bits());
        assert!(m1.is_ok());
        assert_eq!(m1.digest.unwrap(), DigestAlgo::Md5.digest(b"O2:011"));
    }

    #[test]
    fn validation_errors() {
        let s = space(2);
        assert!(SyntheticModel::new(s.clone(), vec![ModelBenchmark::new("b", 0.0)]).is_err());
        let mut unknown = ModelBenchmark::new("b", 1.0);
        unknown.flag_delta.insert("nope".into(), 1.0);
        assert!(SyntheticModel::new(s.clone(), vec![unknown]).is_err());
        let mut negative = ModelBenchmark::new("b", 10.0);
        negative.flag_delta.insert("F1".into(), -6.0);
        negative.flag_delta_disabled.insert("F2".into(), -4.0);
        assert!(SyntheticModel::new(s.clone(), vec![negative]).is_err());
        let dup = vec![ModelBenchmark::new("b", 1.0), ModelBenchmark::new("b", 1.0)];
        assert!(SyntheticModel::new(s.clone(), dup).is_err());
        let model = SyntheticModel::new(s, vec![ModelBenchmark::new("b", 1.0)]).unwrap();
        assert!(model
            .time(&Configuration::from_bitstring("O3", "11").unwrap(), "zz")
            .is_err());
    }

    #[test]
    fn parse_model_document() {
        let doc = r#"
[[benchmarks]]
name = "cover"
base_time = 100.0
level_multiplier = { O1 = 1.2 }
flag_delta_disabled = { F1 = 5.0, F2 = 5.0 }
pair_delta = [ { flags = ["F1", "F2"], state = "both-disabled", delta = -20.0 } ]
"#;
        let model = SyntheticModel::parse(doc, space(2)).unwrap();
        let c = Configuration::from_bitstring("O1", "00").unwrap();
        assert_eq!(model.time(&c, "cover").unwrap(), 110.0);
        let again = SyntheticModel::parse(&model.to_toml(), space(2)).unwrap();
        assert_eq!(again.benchmarks(), model.benchmarks());
    }
}
