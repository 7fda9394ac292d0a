//! Turning (configuration, benchmark) pairs into execution-time measurements.
//!
//! An [`Evaluator`] drives a [`Backend`] (an external compile-and-run pipeline
//! or the deterministic [`SyntheticModel`]) through the cache protocol: compile,
//! digest the binary, reuse any measurement already stored for that
//! `(benchmark, digest)` key, and only otherwise execute. Failing
//! configurations are cached by their configuration key so they are never
//! retried.

mod cache;
mod digest;
mod external;
mod synthetic;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flagspace::{Configuration, FlagSpace};

pub use cache::{CacheRecord, EvalCache};
pub use digest::{Digest, DigestAlgo};
pub use external::{Benchmark, ExternalBackend, Suite, Timing};
pub use synthetic::{JointState, ModelBenchmark, PairDelta, SyntheticBackend, SyntheticModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CompileError,
    RunError,
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::CompileError => "compile_error",
            Status::RunError => "run_error",
            Status::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ok" => Status::Ok,
            "compile_error" => Status::CompileError,
            "run_error" => Status::RunError,
            "timeout" => Status::Timeout,
            other => return Err(Error::Structural(format!("unknown status {other:?}"))),
        })
    }
}

/// One evaluated (configuration, benchmark) pair.
///
/// `time` is present (finite, positive) exactly when `status` is ok; `digest`
/// is present exactly when compilation succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub time: Option<f64>,
    pub digest: Option<Digest>,
    pub status: Status,
    #[serde(default)]
    pub cached: bool,
}

impl Measurement {
    pub fn ok(time: f64, digest: Digest) -> Self {
        Self {
            time: Some(time),
            digest: Some(digest),
            status: Status::Ok,
            cached: false,
        }
    }

    pub fn failed(status: Status, digest: Option<Digest>) -> Self {
        debug_assert_ne!(status, Status::Ok);
        Self {
            time: None,
            digest,
            status,
            cached: false,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    /// Execution time, or `+inf` for any failed measurement.
    pub fn time_or_inf(&self) -> f64 {
        self.time.unwrap_or(f64::INFINITY)
    }

    pub fn as_cached(mut self) -> Self {
        self.cached = true;
        self
    }

    /// Same measurement with the `cached` marker cleared.
    pub fn uncached(mut self) -> Self {
        self.cached = false;
        self
    }
}

/// A compiled binary (or its synthetic stand-in) ready for execution.
#[derive(Debug)]
pub struct Artifact {
    pub digest: Digest,
    pub config: Configuration,
    pub binary: Option<PathBuf>,
    // Keeps the compile directory alive until the artifact is dropped.
    _dir: Option<tempfile::TempDir>,
}

impl Artifact {
    pub fn synthetic(digest: Digest, config: Configuration) -> Self {
        Self {
            digest,
            config,
            binary: None,
            _dir: None,
        }
    }

    pub fn on_disk(digest: Digest, config: Configuration, binary: PathBuf, dir: tempfile::TempDir) -> Self {
        Self {
            digest,
            config,
            binary: Some(binary),
            _dir: Some(dir),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    /// Aggregated time in seconds.
    Time(f64),
    Failed(String),
    Timeout,
}

/// Compile and execution steps for one evaluation pipeline.
///
/// `compile` may be called concurrently for distinct configurations; the
/// evaluator never overlaps two `run` calls.
pub trait Backend: Send + Sync {
    fn space(&self) -> &FlagSpace;

    /// Benchmark names in suite order.
    fn benchmarks(&self) -> Vec<String>;

    fn has_benchmark(&self, bench: &str) -> bool {
        self.benchmarks().iter().any(|b| b == bench)
    }

    fn compile(&self, config: &Configuration, bench: &str) -> std::result::Result<Artifact, String>;

    fn run(&self, artifact: &Artifact, bench: &str) -> RunOutcome;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalStats {
    /// Measurements requested.
    pub requests: usize,
    pub compilations: usize,
    /// Uncached measurement executions (each covers all repeat runs).
    pub executions: usize,
    pub cache_hits: usize,
}

/// Evaluates configurations through a backend with result caching.
pub struct Evaluator {
    backend: Box<dyn Backend>,
    cache: EvalCache,
    jobs: usize,
    stats: EvalStats,
}

impl Evaluator {
    pub fn new(backend: Box<dyn Backend>, cache: EvalCache) -> Self {
        Self {
            backend,
            cache,
            jobs: 1,
            stats: EvalStats::default(),
        }
    }

    /// Synthetic evaluator with an in-memory cache.
    pub fn synthetic(model: SyntheticModel) -> Self {
        Self::new(Box::new(SyntheticBackend::new(model)), EvalCache::in_memory())
    }

    /// Number of concurrent compilations in [`Evaluator::evaluate_batch`].
    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    pub fn space(&self) -> &FlagSpace {
        self.backend.space()
    }

    pub fn benchmarks(&self) -> Vec<String> {
        self.backend.benchmarks()
    }

    pub fn stats(&self) -> EvalStats {
        self.stats
    }

    pub fn cache(&self) -> &EvalCache {
        &self.cache
    }

    pub fn into_cache(self) -> EvalCache {
        self.cache
    }

    fn check(&self, config: &Configuration, bench: &str) -> Result<()> {
        self.backend.space().check(config)?;
        if !self.backend.has_benchmark(bench) {
            return Err(Error::Structural(format!("unknown benchmark {bench:?}")));
        }
        Ok(())
    }

    pub fn evaluate(&mut self, config: &Configuration, bench: &str) -> Result<Measurement> {
        let mut out = self.evaluate_batch(&[(config.clone(), bench.to_string())])?;
        Ok(out.pop().expect("one result per request"))
    }

    /// Evaluates every request. Compilation may proceed concurrently;
    /// executions happen one at a time in submission order.
    pub fn evaluate_batch(&mut self, requests: &[(Configuration, String)]) -> Result<Vec<Measurement>> {
        for (config, bench) in requests {
            self.check(config, bench)?;
        }
        self.stats.requests += requests.len();

        let needs_compile: Vec<usize> = (0..requests.len())
            .filter(|&i| {
                let (config, bench) = &requests[i];
                self.cache.failure(bench, config).is_none()
            })
            .collect();
        let mut compiled = self.compile_all(requests, &needs_compile);

        let mut results = Vec::with_capacity(requests.len());
        for (i, (config, bench)) in requests.iter().enumerate() {
            if let Some(hit) = self.cache.failure(bench, config) {
                self.stats.cache_hits += 1;
                results.push(hit.clone().as_cached());
                continue;
            }
            let artifact = match compiled[i].take().expect("compiled in the first phase") {
                Ok(artifact) => artifact,
                Err(_) => {
                    let m = Measurement::failed(Status::CompileError, None);
                    self.cache.insert_failure(bench, config, m.clone())?;
                    results.push(m);
                    continue;
                }
            };
            if let Some(hit) = self.cache.lookup(bench, &artifact.digest) {
                self.stats.cache_hits += 1;
                results.push(hit.clone().as_cached());
                continue;
            }
            self.stats.executions += 1;
            let m = match self.backend.run(&artifact, bench) {
                RunOutcome::Time(t) if t.is_finite() && t > 0.0 => Measurement::ok(t, artifact.digest.clone()),
                RunOutcome::Time(_) | RunOutcome::Failed(_) => {
                    Measurement::failed(Status::RunError, Some(artifact.digest.clone()))
                }
                RunOutcome::Timeout => Measurement::failed(Status::Timeout, Some(artifact.digest.clone())),
            };
            if m.is_ok() {
                self.cache.insert_ok(bench, config, m.clone())?;
            } else {
                self.cache.insert_failure(bench, config, m.clone())?;
            }
            results.push(m);
        }
        Ok(results)
    }

    fn compile_all(
        &mut self,
        requests: &[(Configuration, String)],
        indices: &[usize],
    ) -> Vec<Option<std::result::Result<Artifact, String>>> {
        let mut out: Vec<Option<std::result::Result<Artifact, String>>> = (0..requests.len()).map(|_| None).collect();
        self.stats.compilations += indices.len();
        let backend = &*self.backend;
        if self.jobs <= 1 || indices.len() <= 1 {
            for &i in indices {
                let (config, bench) = &requests[i];
                out[i] = Some(backend.compile(config, bench));
            }
            return out;
        }
        let chunk = indices.len().div_ceil(self.jobs);
        let done: Vec<(usize, std::result::Result<Artifact, String>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = indices
                .chunks(chunk)
                .map(|part| {
                    scope.spawn(move || {
                        part.iter()
                            .map(|&i| {
                                let (config, bench) = &requests[i];
                                (i, backend.compile(config, bench))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("compile worker panicked"))
                .collect()
        });
        for (i, r) in done {
            out[i] = Some(r);
        }
        out
    }
}
