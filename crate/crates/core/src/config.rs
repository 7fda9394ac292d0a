//! Campaign configuration files.
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::evaluator::{DigestAlgo, EvalCache, Evaluator, ExternalBackend, Suite, SyntheticBackend, SyntheticModel};
use crate::flagspace::FlagSpace;
use crate::search::{Aggregate, SuiteCeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    External,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RicSection {
    pub n_configs: usize,
}

impl Default for RicSection {
    fn default() -> Self {
        Self { n_configs: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteCeSection {
    pub threshold: f64,
    pub aggregate: Aggregate,
}

impl Default for SuiteCeSection {
    fn default() -> Self {
        Self {
            threshold: 5.0,
            aggregate: Aggregate::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XvalSection {
    pub k: usize,
}

impl Default for XvalSection {
    fn default() -> Self {
        Self { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub max_flags: usize,
    /// Threshold for the suite-constrained optimum; the suite-CE threshold
    /// when absent.
    pub threshold: Option<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            max_flags: crate::oracle::DEFAULT_MAX_FLAGS,
            threshold: None,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub mode: Mode,
    pub flag_space: PathBuf,
    pub model: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    /// Persistent evaluation cache; in memory when absent.
    pub cache: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub digest: DigestAlgo,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Benchmarks to tune; every benchmark of the model or suite when absent.
    pub benchmarks: Option<Vec<String>>,
    #[serde(default)]
    pub ric: RicSection,
    #[serde(default)]
    pub suite_ce: SuiteCeSection,
    #[serde(default)]
    pub xval: XvalSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

fn must_exist(what: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Structural(format!("{what} {} does not exist", path.display())))
    }
}

impl CampaignConfig {
    pub fn parse(document: &str, dir: &Path) -> Result<Self> {
        let mut c: CampaignConfig =
            toml::from_str(document).map_err(|e| Error::Structural(format!("campaign file: {e}")))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        resolve(&mut c.flag_space);
        resolve(&mut c.out);
        for p in [&mut c.model, &mut c.suite, &mut c.cache].into_iter().flatten() {
            resolve(p);
        }
        Ok(c)
    }

    /// Parses and checks that every referenced input exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let c = Self::parse(&text, dir)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        must_exist("flag space file", &self.flag_space)?;
        match self.mode {
            Mode::Synthetic => must_exist(
                "model file",
                self.model
                    .as_deref()
                    .ok_or_else(|| Error::Structural("synthetic mode needs `model`".into()))?,
            )?,
            Mode::External => must_exist(
                "suite file",
                self.suite
                    .as_deref()
                    .ok_or_else(|| Error::Structural("external mode needs `suite`".into()))?,
            )?,
        }
        if self.jobs == 0 {
            return Err(Error::Structural("jobs must be at least 1".into()));
        }
        if self.suite_ce.threshold.is_nan() || self.suite_ce.threshold < 0.0 {
            return Err(Error::Structural("suite_ce.threshold must be >= 0".into()));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<FlagSpace> {
        FlagSpace::load(&self.flag_space)
    }

    /// The synthetic model, in synthetic mode.
    pub fn model(&self) -> Result<SyntheticModel> {
        match (self.mode, &self.model) {
            (Mode::Synthetic, Some(path)) => {
                Ok(SyntheticModel::load(path, self.space()?)?.with_digest_algo(self.digest))
            }
            _ => Err(Error::Structural("only available in synthetic mode".into())),
        }
    }

    pub fn evaluator(&self) -> Result<Evaluator> {
        let cache = match &self.cache {
            Some(path) => EvalCache::open(path)?,
            None => EvalCache::in_memory(),
        };
        let backend: Box<dyn crate::evaluator::Backend> = match self.mode {
            Mode::Synthetic => Box::new(SyntheticBackend::new(self.model()?)),
            Mode::External => {
                let suite = Suite::load(self.suite.as_deref().expect("validated"))?;
                Box::new(ExternalBackend::new(self.space()?, suite)?.with_digest_algo(self.digest))
            }
        };
        Ok(Evaluator::new(backend, cache).with_jobs(self.jobs))
    }

    /// Configured benchmarks, checked against the evaluator's.
    pub fn targets(&self, evaluator: &Evaluator) -> Result<Vec<String>> {
        let all = evaluator.benchmarks();
        match &self.benchmarks {
            None => Ok(all),
            Some(list) => {
                if list.is_empty() {
                    return Err(Error::Structural("`benchmarks` is empty".into()));
                }
                for b in list {
                    if !all.contains(b) {
                        return Err(Error::Structural(format!("unknown benchmark {b:?}")));
                    }
                }
                Ok(list.clone())
            }
        }
    }

    pub fn suite_ce_params(&self) -> SuiteCeParams {
        SuiteCeParams {
            threshold: self.suite_ce.threshold,
            baseline: None,
            aggregate: self.suite_ce.aggregate,
        }
    }
}
