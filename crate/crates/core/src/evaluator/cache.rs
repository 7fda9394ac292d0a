use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Digest, DigestAlgo, Measurement, Status};
use crate::error::{Error, Result};
use crate::flagspace::Configuration;

/// One line of the append-only cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub benchmark: String,
    pub digest_algo: Option<DigestAlgo>,
    pub digest: Option<String>,
    pub status: Status,
    pub time: Option<f64>,
    pub base_level: String,
    pub config_bitstring: String,
}

impl CacheRecord {
    fn measurement(&self) -> Result<Measurement> {
        let digest = match (&self.digest_algo, &self.digest) {
            (Some(algo), Some(hex)) => Some(Digest {
                algo: *algo,
                hex: hex.clone(),
            }),
            (None, None) => None,
            _ => return Err(Error::Cache("digest_algo and digest must appear together".into())),
        };
        match (self.status, self.time, &digest) {
            (Status::Ok, Some(t), Some(d)) if t.is_finite() && t > 0.0 => Ok(Measurement::ok(t, d.clone())),
            (Status::Ok, _, _) => Err(Error::Cache(format!(
                "ok record for {} without a valid time and digest",
                self.benchmark
            ))),
            (status, None, _) => Ok(Measurement::failed(status, digest)),
            (_, Some(_), _) => Err(Error::Cache("failed record carries a time".into())),
        }
    }
}

/// Measurement cache keyed by `(benchmark, binary digest)`; failed
/// evaluations are keyed by `(benchmark, configuration)` instead.
///
/// When backed by a file, every insertion is appended immediately and the
/// file is held under an exclusive advisory lock.
#[derive(Debug, Default)]
pub struct EvalCache {
    ok: HashMap<(String, Digest), Measurement>,
    failed: HashMap<(String, String), Measurement>,
    records: Vec<CacheRecord>,
    file: Option<File>,
    path: Option<PathBuf>,
}

impl EvalCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a persistent cache and loads its records.
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        file.try_lock()
            .map_err(|e| Error::Cache(format!("{} is locked by another campaign: {e}", path.display())))?;
        let mut cache = Self::default();
        let reader = BufReader::new(&mut file);
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord =
                serde_json::from_str(&line).map_err(|e| Error::Cache(format!("{}:{}: {e}", path.display(), n + 1)))?;
            cache.absorb(record)?;
        }
        cache.file = Some(file);
        cache.path = Some(path.to_path_buf());
        Ok(cache)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.ok.len() + self.failed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records in insertion (file) order.
    pub fn records(&self) -> &[CacheRecord] {
        &self.records
    }

    pub fn lookup(&self, bench: &str, digest: &Digest) -> Option<&Measurement> {
        self.ok.get(&(bench.to_string(), digest.clone()))
    }

    pub fn failure(&self, bench: &str, config: &Configuration) -> Option<&Measurement> {
        self.failed.get(&(bench.to_string(), config.key()))
    }

    // Keeps the first record for a key; later duplicates are ignored.
    fn absorb(&mut self, record: CacheRecord) -> Result<bool> {
        let m = record.measurement()?;
        let fresh = if m.is_ok() {
            let key = (record.benchmark.clone(), m.digest.clone().expect("ok has digest"));
            match self.ok.entry(key) {
                Entry::Occupied(_) => false,
                Entry::Vacant(e) => {
                    e.insert(m);
                    true
                }
            }
        } else {
            let config = Configuration::from_bitstring(record.base_level.clone(), &record.config_bitstring)?;
            let key = (record.benchmark.clone(), config.key());
            match self.failed.entry(key) {
                Entry::Occupied(_) => false,
                Entry::Vacant(e) => {
                    e.insert(m);
                    true
                }
            }
        };
        if fresh {
            self.records.push(record);
        }
        Ok(fresh)
    }

    fn insert(&mut self, bench: &str, config: &Configuration, m: Measurement) -> Result<()> {
        let record = CacheRecord {
            benchmark: bench.to_string(),
            digest_algo: m.digest.as_ref().map(|d| d.algo),
            digest: m.digest.as_ref().map(|d| d.hex.clone()),
            status: m.status,
            time: m.time,
            base_level: config.base_level.clone(),
            config_bitstring: config.bitstring(),
        };
        if self.absorb(record.clone())? {
            if let Some(file) = self.file.as_mut() {
                let mut line = serde_json::to_string(&record).expect("cache record serializes");
                line.push('\n');
                let path = self.path.as_deref().unwrap_or(Path::new("cache"));
                file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
                file.flush().map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(())
    }

    pub fn insert_ok(&mut self, bench: &str, config: &Configuration, m: Measurement) -> Result<()> {
        debug_assert!(m.is_ok());
        self.insert(bench, config, m.uncached())
    }

    pub fn insert_failure(&mut self, bench: &str, config: &Configuration, m: Measurement) -> Result<()> {
        debug_assert!(!m.is_ok());
        self.insert(bench, config, m.uncached())
    }
}
