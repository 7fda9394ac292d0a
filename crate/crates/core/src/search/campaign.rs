//! Campaign bookkeeping shared by every search: trace construction,
//! interruption, checkpointing, and deterministic resume.
//!
//! A checkpoint stores the trace recorded so far. Resuming re-runs the search
//! from the start while answering its measurement requests from that trace in
//! order; once the recorded measurements are used up the campaign continues
//! live. A deterministic search therefore produces exactly the trace an
//! uninterrupted run would have.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::trace::{CampaignTrace, TraceRecord};
use crate::error::{Error, Result};
use crate::evaluator::{EvalStats, Evaluator, Measurement};
use crate::flagspace::{Configuration, FlagSpace};

/// Serialized campaign progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Identifies the campaign (command and parameters) the checkpoint belongs to.
    pub label: String,
    /// Search-specific state at the time of writing, for inspection.
    pub state: Option<serde_json::Value>,
    pub trace: CampaignTrace,
    pub complete: bool,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let text = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

/// When a campaign must stop taking new measurements.
#[derive(Debug, Clone, Default)]
pub struct StopPolicy {
    /// Stop before the live measurement that would exceed this count.
    pub max_measurements: Option<usize>,
    /// Set asynchronously (e.g. by a signal handler) to request a stop.
    pub flag: Option<Arc<AtomicBool>>,
}

impl StopPolicy {
    pub fn after(n: usize) -> Self {
        Self {
            max_measurements: Some(n),
            flag: None,
        }
    }

    fn should_stop(&self, taken: usize) -> bool {
        self.max_measurements.is_some_and(|max| taken >= max)
            || self.flag.as_ref().is_some_and(|f| f.load(Ordering::SeqCst))
    }
}

struct Sink {
    path: PathBuf,
    interval: Duration,
    last: Option<Instant>,
}

/// Live state of a running search.
pub struct Campaign<'e> {
    evaluator: &'e mut Evaluator,
    label: String,
    trace: CampaignTrace,
    replay: VecDeque<(Configuration, String, Measurement)>,
    replayed: usize,
    live: usize,
    stop: StopPolicy,
    state: Option<serde_json::Value>,
    sink: Option<Sink>,
}

impl<'e> Campaign<'e> {
    pub fn new(evaluator: &'e mut Evaluator) -> Self {
        Self {
            evaluator,
            label: String::new(),
            trace: CampaignTrace::new(),
            replay: VecDeque::new(),
            replayed: 0,
            live: 0,
            stop: StopPolicy::default(),
            state: None,
            sink: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_stop(mut self, stop: StopPolicy) -> Self {
        self.stop = stop;
        self
    }

    /// Writes a checkpoint to `path` at most once per `interval`, and always
    /// when the campaign is interrupted or finishes.
    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>, interval: Duration) -> Self {
        self.sink = Some(Sink {
            path: path.into(),
            interval,
            last: None,
        });
        self
    }

    /// Replays the measurements recorded in `checkpoint` before going live.
    pub fn resume(mut self, checkpoint: Checkpoint) -> Result<Self> {
        if checkpoint.label != self.label {
            return Err(Error::Checkpoint(format!(
                "checkpoint belongs to campaign {:?}, not {:?}",
                checkpoint.label, self.label
            )));
        }
        checkpoint.trace.validate()?;
        self.replay = checkpoint
            .trace
            .records
            .into_iter()
            .flat_map(|r| {
                let config = r.config;
                r.measurements.into_iter().map(move |(b, m)| (config.clone(), b, m))
            })
            .collect();
        Ok(self)
    }

    pub fn space(&self) -> &FlagSpace {
        self.evaluator.space()
    }

    pub fn trace(&self) -> &CampaignTrace {
        &self.trace
    }

    pub fn stats(&self) -> EvalStats {
        self.evaluator.stats()
    }

    /// Measurements answered from a checkpoint rather than the evaluator.
    pub fn replayed(&self) -> usize {
        self.replayed
    }

    /// Records search state for inclusion in the next checkpoint.
    pub fn set_state<S: Serialize>(&mut self, state: &S) {
        self.state = Some(serde_json::to_value(state).expect("search state serializes"));
    }

    pub fn annotate(&mut self, record: usize, annotation: impl Into<String>) {
        self.trace.records[record].annotation = annotation.into();
    }

    pub fn record_at(&self, record: usize) -> &TraceRecord {
        &self.trace.records[record]
    }

    fn take_replay(&mut self, config: &Configuration, bench: &str) -> Result<Option<Measurement>> {
        match self.replay.front() {
            None => Ok(None),
            Some((c, b, _)) if c == config && b == bench => {
                self.replayed += 1;
                Ok(self.replay.pop_front().map(|(_, _, m)| m))
            }
            Some((c, b, _)) => Err(Error::Checkpoint(format!(
                "checkpoint diverges from the campaign: recorded {c} on {b}, campaign asked for {config} on {bench}"
            ))),
        }
    }

    fn interrupted(&mut self) -> Error {
        if let Err(e) = self.write_checkpoint(false) {
            return e;
        }
        Error::Interrupted {
            events: self.trace.measurement_count(),
        }
    }

    fn measure(&mut self, config: &Configuration, bench: &str) -> Result<Measurement> {
        if let Some(m) = self.take_replay(config, bench)? {
            return Ok(m);
        }
        if self.stop.should_stop(self.live) {
            return Err(self.interrupted());
        }
        self.live += 1;
        self.evaluator.evaluate(config, bench)
    }

    fn open_record(&mut self, config: &Configuration, annotation: String) -> usize {
        let seq = self.trace.len() + 1;
        self.trace.records.push(TraceRecord {
            seq,
            config: config.clone(),
            measurements: Vec::new(),
            annotation,
        });
        seq - 1
    }

    /// Evaluates `config` on `benches` in order as one trace record.
    /// `abort(i, m)` is consulted after each measurement; returning true
    /// skips the remaining benchmarks. Returns the record index.
    pub fn record(
        &mut self,
        config: &Configuration,
        benches: &[String],
        annotation: impl Into<String>,
        mut abort: impl FnMut(usize, &Measurement) -> bool,
    ) -> Result<usize> {
        let idx = self.open_record(config, annotation.into());
        for (i, bench) in benches.iter().enumerate() {
            let m = self.measure(config, bench)?;
            let stop = abort(i, &m);
            self.trace.records[idx].measurements.push((bench.clone(), m));
            if stop {
                break;
            }
        }
        self.maybe_checkpoint()?;
        Ok(idx)
    }

    /// Evaluates several configurations on every benchmark, one record per
    /// configuration, as a single batch through the evaluator. Returns the
    /// record indices.
    pub fn record_many(&mut self, items: &[(Configuration, String)], benches: &[String]) -> Result<Vec<usize>> {
        let mut indices = Vec::with_capacity(items.len());
        let mut pending: Vec<(usize, Configuration, String)> = Vec::new();
        for (config, annotation) in items {
            let idx = self.open_record(config, annotation.clone());
            indices.push(idx);
            for bench in benches {
                if pending.is_empty() {
                    if let Some(m) = self.take_replay(config, bench)? {
                        self.trace.records[idx].measurements.push((bench.clone(), m));
                        continue;
                    }
                }
                pending.push((idx, config.clone(), bench.clone()));
            }
        }
        let budget = match self.stop.max_measurements {
            Some(max) => max.saturating_sub(self.live),
            None => usize::MAX,
        };
        let flagged = self.stop.flag.as_ref().is_some_and(|f| f.load(Ordering::SeqCst));
        let allowed = if flagged { 0 } else { budget.min(pending.len()) };
        let requests: Vec<(Configuration, String)> = pending[..allowed]
            .iter()
            .map(|(_, c, b)| (c.clone(), b.clone()))
            .collect();
        let results = self.evaluator.evaluate_batch(&requests)?;
        self.live += allowed;
        for ((idx, _, bench), m) in pending.iter().zip(results) {
            self.trace.records[*idx].measurements.push((bench.clone(), m));
        }
        if allowed < pending.len() {
            // Drop records that received nothing so the trace ends cleanly.
            while self.trace.records.last().is_some_and(|r| r.measurements.is_empty()) {
                self.trace.records.pop();
            }
            return Err(self.interrupted());
        }
        self.maybe_checkpoint()?;
        Ok(indices)
    }

    fn maybe_checkpoint(&mut self) -> Result<()> {
        let due = match &self.sink {
            Some(sink) => sink.last.is_none_or(|t| t.elapsed() >= sink.interval),
            None => false,
        };
        if due {
            self.write_checkpoint(false)?;
        }
        Ok(())
    }

    fn write_checkpoint(&mut self, complete: bool) -> Result<()> {
        let Some(sink) = self.sink.as_mut() else {
            return Ok(());
        };
        let checkpoint = Checkpoint {
            label: self.label.clone(),
            state: self.state.clone(),
            trace: self.trace.clone(),
            complete,
        };
        checkpoint.save(&sink.path)?;
        sink.last = Some(Instant::now());
        Ok(())
    }

    /// Ends the campaign and returns its trace. Fails if a resumed
    /// checkpoint holds measurements the search never asked for.
    pub fn finish(mut self) -> Result<CampaignTrace> {
        if !self.replay.is_empty() {
            return Err(Error::Checkpoint(format!(
                "{} recorded measurements were never replayed",
                self.replay.len()
            )));
        }
        self.write_checkpoint(true)?;
        Ok(self.trace)
    }
}
