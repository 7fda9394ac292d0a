//! Compile-and-run pipeline driven by shell command templates.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::{Artifact, Backend, DigestAlgo, RunOutcome};
use crate::error::{Error, Result};
use crate::flagspace::{Configuration, FlagSpace};

/// How a run's execution time is obtained.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timing {
    /// The run command prints the time in seconds on its last output line.
    #[default]
    Reported,
    /// The harness wall-clocks the run command.
    External,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_compile_timeout() -> f64 {
    600.0
}

fn default_repeat_runs() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    /// Template with `{flags}` and `{out}` placeholders.
    #[serde(default)]
    pub compile: Option<String>,
    /// Template with a `{bin}` placeholder.
    #[serde(default)]
    pub run: Option<String>,
    /// Seconds allowed per timed run.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default = "default_compile_timeout")]
    pub compile_timeout: f64,
    /// Timed executions per measurement; the minimum is reported.
    #[serde(default = "default_repeat_runs")]
    pub repeat_runs: u32,
}

impl Benchmark {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            compile: None,
            run: None,
            timeout: default_timeout(),
            compile_timeout: default_compile_timeout(),
            repeat_runs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    #[serde(default)]
    pub timing: Timing,
    pub benchmarks: Vec<Benchmark>,
    /// Working directory for commands; the suite file's directory when loaded.
    #[serde(skip)]
    pub dir: PathBuf,
}

impl Suite {
    pub fn new(benchmarks: Vec<Benchmark>) -> Result<Self> {
        let suite = Self {
            timing: Timing::Reported,
            benchmarks,
            dir: PathBuf::from("."),
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn parse(document: &str, dir: &Path) -> Result<Self> {
        let mut suite: Suite =
            toml::from_str(document).map_err(|e| Error::Suite(format!("malformed document: {e}")))?;
        suite.dir = dir.to_path_buf();
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, &dir)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for b in &self.benchmarks {
            if b.name.is_empty() || !seen.insert(b.name.as_str()) {
                return Err(Error::Suite(format!("empty or duplicate benchmark name {:?}", b.name)));
            }
            if !(b.timeout.is_finite() && b.timeout > 0.0 && b.compile_timeout > 0.0) {
                return Err(Error::Suite(format!("{}: timeouts must be positive", b.name)));
            }
            if b.repeat_runs < 1 {
                return Err(Error::Suite(format!("{}: repeat_runs must be at least 1", b.name)));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.benchmarks.iter().map(|b| b.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Benchmark> {
        self.benchmarks.iter().find(|b| b.name == name)
    }
}

/// Quotes `arg` for a POSIX shell when it contains anything unusual.
fn shell_quote(arg: &str) -> String {
    let plain = !arg.is_empty()
        && arg
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_=+./:,@%".contains(c));
    if plain {
        arg.to_string()
    } else {
        format!("'{}'", arg.replace('\'', r"'\''"))
    }
}

enum Exit {
    Ok { stdout: String, elapsed: Duration },
    Failed,
    Timeout,
}

fn run_shell(command: &str, dir: &Path, timeout: Duration) -> Exit {
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(command)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(_) => return Exit::Failed,
    };
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stdout.read_to_string(&mut buf);
        buf
    });
    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            kill_group(&mut child);
            let _ = reader.join();
            return Exit::Timeout;
        }
        Err(_) => {
            kill_group(&mut child);
            let _ = reader.join();
            return Exit::Failed;
        }
    };
    let elapsed = start.elapsed();
    let stdout = reader.join().unwrap_or_default();
    if status.success() {
        Exit::Ok { stdout, elapsed }
    } else {
        Exit::Failed
    }
}

fn kill_group(child: &mut Child) {
    // The child leads its own process group, so this also reaches anything
    // the shell spawned.
    #[cfg(unix)]
    unsafe {
        libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Backend that shells out to a real compiler and a real run command.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    space: FlagSpace,
    suite: Suite,
    digest_algo: DigestAlgo,
}

impl ExternalBackend {
    pub fn new(space: FlagSpace, suite: Suite) -> Result<Self> {
        for b in &suite.benchmarks {
            if b.compile.is_none() || b.run.is_none() {
                return Err(Error::Suite(format!(
                    "{}: external evaluation needs both compile and run commands",
                    b.name
                )));
            }
        }
        Ok(Self {
            space,
            suite,
            digest_algo: DigestAlgo::Md5,
        })
    }

    pub fn with_digest_algo(mut self, algo: DigestAlgo) -> Self {
        self.digest_algo = algo;
        self
    }

    fn bench(&self, name: &str) -> std::result::Result<&Benchmark, String> {
        self.suite
            .get(name)
            .ok_or_else(|| format!("unknown benchmark {name:?}"))
    }
}

impl Backend for ExternalBackend {
    fn space(&self) -> &FlagSpace {
        &self.space
    }

    fn benchmarks(&self) -> Vec<String> {
        self.suite.names()
    }

    fn has_benchmark(&self, bench: &str) -> bool {
        self.suite.get(bench).is_some()
    }

    fn compile(&self, config: &Configuration, bench: &str) -> std::result::Result<Artifact, String> {
        let b = self.bench(bench)?;
        let args = self.space.render_args(config).map_err(|e| e.to_string())?;
        let flags = args.iter().map(|a| shell_quote(a)).collect::<Vec<_>>().join(" ");
        let dir = tempfile::Builder::new()
            .prefix("flagtune-")
            .tempdir()
            .map_err(|e| e.to_string())?;
        let out = dir.path().join(format!("{bench}.bin"));
        let out_text = shell_quote(&out.to_string_lossy());
        let command = b
            .compile
            .as_deref()
            .expect("checked at construction")
            .replace("{flags}", &flags)
            .replace("{out}", &out_text);
        match run_shell(&command, &self.suite.dir, Duration::from_secs_f64(b.compile_timeout)) {
            Exit::Ok { .. } => {}
            Exit::Failed => return Err(format!("compile command failed: {command}")),
            Exit::Timeout => return Err(format!("compile command timed out: {command}")),
        }
        let bytes = std::fs::read(&out).map_err(|e| format!("no binary at {}: {e}", out.display()))?;
        Ok(Artifact::on_disk(
            self.digest_algo.digest(&bytes),
            config.clone(),
            out,
            dir,
        ))
    }

    fn run(&self, artifact: &Artifact, bench: &str) -> RunOutcome {
        let b = match self.bench(bench) {
            Ok(b) => b,
            Err(e) => return RunOutcome::Failed(e),
        };
        let bin = artifact
            .binary
            .as_deref()
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default();
        let command = b
            .run
            .as_deref()
            .expect("checked at construction")
            .replace("{bin}", &shell_quote(&bin));
        let timeout = Duration::from_secs_f64(b.timeout);
        let mut best = f64::INFINITY;
        for _ in 0..b.repeat_runs {
            let time = match run_shell(&command, &self.suite.dir, timeout) {
                Exit::Ok { stdout, elapsed } => match self.suite.timing {
                    Timing::External => elapsed.as_secs_f64(),
                    Timing::Reported => match parse_reported_time(&stdout) {
                        Some(t) => t,
                        None => return RunOutcome::Failed("run did not report a time".into()),
                    },
                },
                Exit::Failed => return RunOutcome::Failed(format!("run command failed: {command}")),
                Exit::Timeout => return RunOutcome::Timeout,
            };
            best = best.min(time);
        }
        RunOutcome::Time(best)
    }
}

/// Parses the last non-empty output line as a positive time in seconds.
fn parse_reported_time(stdout: &str) -> Option<f64> {
    let line = stdout.lines().rev().find(|l| !l.trim().is_empty())?;
    let t: f64 = line.trim().parse().ok()?;
    (t.is_finite() && t > 0.0).then_some(t)
}
