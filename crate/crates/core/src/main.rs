use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use flagtune::analysis::{
    compare_to_baseline, floored_best_so_far, make_folds, parse_features, parse_reference, performance_tables,
    predict_1nn, reference_times, run_xval, PerformanceTable, REFERENCE,
};
use flagtune::config::{CampaignConfig, Mode};
use flagtune::oracle::{optimum, suite_optimum};
use flagtune::search::{
    combined_elimination, random_iterative, suite_combined_elimination, Campaign, CampaignTrace, Checkpoint, StopPolicy,
};
use flagtune::{Configuration, Error, FlagSpace};

const CHECKPOINT_INTERVAL: Duration = Duration::from_secs(30);

#[derive(Parser)]
#[command(name = "flagtune", version, about = "Compiler flag autotuning campaigns and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Campaign configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Continue the campaign recorded in this checkpoint.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,

    /// Stop after this many live evaluations, leaving a checkpoint.
    #[arg(long, global = true, hide = true)]
    max_evaluations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Random iterative compilation over the configured benchmarks.
    Ric {
        #[arg(long)]
        n_configs: Option<usize>,
    },
    /// Combined elimination, separately for each configured benchmark.
    Ce,
    /// One configuration for the whole suite under a slowdown threshold.
    SuiteCe {
        /// Per-benchmark slowdown threshold in percent.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Exhaustive optimum of a synthetic model.
    Oracle {
        #[arg(long)]
        max_flags: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Best-known comparison table and best-so-far series from traces.
    Report {
        /// Trace file, optionally labeled as LABEL=PATH.
        #[arg(long = "trace", value_name = "[LABEL=]PATH", required = true)]
        traces: Vec<String>,
        /// Reference times (benchmark<TAB>time); taken from the traces'
        /// reference records when absent.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// K-fold cross-validation of suite-wide combined elimination.
    Xval {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Predict a configuration from the nearest program in feature space.
    #[command(name = "predict-1nn")]
    Predict1nn {
        /// Feature table: program name, then numeric columns.
        #[arg(long)]
        features: PathBuf,
        /// Traces holding the training programs' measurements.
        #[arg(long = "training", required = true)]
        training: Vec<PathBuf>,
        /// Program to predict for; must appear in the feature table.
        #[arg(long)]
        query: String,
    },
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

fn campaign_failure(error: Error) -> Failure {
    let code = if matches!(error, Error::Interrupted { .. }) {
        3
    } else {
        2
    };
    Failure {
        code,
        error: error.into(),
    }
}

type Outcome = Result<String, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("flagtune: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Report { traces, reference } => cmd_report(&cli, traces, reference.as_deref()),
        Command::Predict1nn {
            features,
            training,
            query,
        } => cmd_predict(&cli, features, training, query),
        _ => {
            let config = load_config(&cli)?;
            match &cli.command {
                Command::Ric { n_configs } => cmd_ric(&cli, config, *n_configs),
                Command::Ce => cmd_ce(&cli, config),
                Command::SuiteCe { threshold } => cmd_suite_ce(&cli, config, *threshold),
                Command::Oracle { max_flags, threshold } => cmd_oracle(&cli, config, *max_flags, *threshold),
                Command::Xval { k } => cmd_xval(&cli, config, *k),
                Command::Report { .. } | Command::Predict1nn { .. } => unreachable!(),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<CampaignConfig, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| usage(anyhow!("this command needs --config")))?;
    let mut config = CampaignConfig::load(path).map_err(usage)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(usage)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(|error| Failure { code: 2, error })
}

/// Records the summary in `summary.txt` and appends it, timestamped, to the
/// log, which is the only output that differs between identical runs.
fn finish_summary(dir: &Path, summary: String) -> Outcome {
    write(&dir.join("summary.txt"), &format!("{summary}\n"))?;
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let log = dir.join("flagtune.log");
    std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log)
        .and_then(|mut f| writeln!(f, "{secs}\t{summary}"))
        .with_context(|| format!("writing {}", log.display()))
        .map_err(|error| Failure { code: 2, error })?;
    Ok(summary)
}

#[derive(Serialize)]
struct FinalEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    benchmark: Option<String>,
    base_level: String,
    bitstring: String,
    /// Complete command line.
    args: String,
    /// Flags differing from the stock level.
    delta: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
}

#[derive(Serialize)]
struct FinalFile {
    configuration: Vec<FinalEntry>,
}

fn final_entry(
    space: &FlagSpace,
    benchmark: Option<&str>,
    config: &Configuration,
    time: Option<f64>,
    ratio: Option<f64>,
) -> Result<FinalEntry, Failure> {
    let args = space.render_args(config).map_err(campaign_failure)?;
    let delta = space.render_delta(config).map_err(campaign_failure)?;
    Ok(FinalEntry {
        benchmark: benchmark.map(str::to_string),
        base_level: config.base_level.clone(),
        bitstring: config.bitstring(),
        args: args.join(" "),
        delta: delta.join(" "),
        time,
        ratio,
    })
}

fn write_final(path: &Path, entries: Vec<FinalEntry>) -> Result<(), Failure> {
    let text = toml::to_string(&FinalFile { configuration: entries }).expect("final configuration serializes");
    write(path, &text)
}

/// Sets up a checkpointed campaign, runs `search` in it and writes the trace.
fn run_campaign<T>(
    cli: &Cli,
    config: &CampaignConfig,
    evaluator: &mut flagtune::Evaluator,
    label: String,
    search: impl FnOnce(&mut Campaign<'_>) -> flagtune::Result<T>,
) -> Result<(T, CampaignTrace, flagtune::evaluator::EvalStats), Failure> {
    let resume = match &cli.resume {
        Some(path) => {
            let cp = Checkpoint::load(path).map_err(usage)?;
            if cp.label != label {
                return Err(usage(anyhow!(
                    "{} belongs to campaign {:?}, not {:?}",
                    path.display(),
                    cp.label,
                    label
                )));
            }
            Some(cp)
        }
        None => None,
    };
    create_dir(&config.out)?;
    let stop_flag = Arc::new(AtomicBool::new(false));
    {
        let flag = stop_flag.clone();
        // Only fails when a handler is already installed.
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
    }
    let checkpoint = config.out.join("checkpoint.json");
    let mut campaign = Campaign::new(evaluator)
        .with_label(label)
        .with_stop(StopPolicy {
            max_measurements: cli.max_evaluations,
            flag: Some(stop_flag),
        })
        .with_checkpoint(&checkpoint, CHECKPOINT_INTERVAL);
    if let Some(cp) = resume {
        campaign = campaign.resume(cp).map_err(usage)?;
    }
    let value = search(&mut campaign).map_err(|e| {
        let mut f = campaign_failure(e);
        if f.code == 3 {
            f.error = f
                .error
                .context(format!("resume with --resume {}", checkpoint.display()));
        }
        f
    })?;
    let stats = campaign.stats();
    let trace = campaign.finish().map_err(campaign_failure)?;
    write(&config.out.join("trace.tsv"), &trace.to_tsv())?;
    Ok((value, trace, stats))
}

fn cmd_ric(cli: &Cli, config: CampaignConfig, n_configs: Option<usize>) -> Outcome {
    let mut evaluator = config.evaluator().map_err(usage)?;
    let targets = config.targets(&evaluator).map_err(usage)?;
    let n = n_configs.unwrap_or(config.ric.n_configs);
    let seed = config.seed;
    let label = format!("ric n_configs={n} seed={seed} benchmarks={}", targets.join(","));
    let ((), trace, stats) = run_campaign(cli, &config, &mut evaluator, label, |c| {
        random_iterative(c, &targets, n, seed)
    })?;

    let refs = reference_times(&[&trace]).map_err(campaign_failure)?;
    let cmp = compare_to_baseline(&[("ric".into(), &trace)], &refs).map_err(campaign_failure)?;
    let space = evaluator.space();
    let entries = cmp
        .rows
        .iter()
        .map(|r| final_entry(space, Some(&r.benchmark), &r.config, Some(r.best), Some(r.ratio)))
        .collect::<Result<Vec<_>, _>>()?;
    write_final(&config.out.join("final.toml"), entries)?;
    let series = floored_best_so_far(&trace, &refs).map_err(campaign_failure)?;
    write(&config.out.join("series.tsv"), &series.to_tsv())?;
    finish_summary(
        &config.out,
        format!(
            "ric: {} configurations, {} evaluations, {} cache hits, best mean ratio {:.4}",
            trace.len(),
            stats.executions,
            stats.cache_hits,
            cmp.mean
        ),
    )
}

fn cmd_ce(cli: &Cli, config: CampaignConfig) -> Outcome {
    let mut evaluator = config.evaluator().map_err(usage)?;
    let targets = config.targets(&evaluator).map_err(usage)?;
    let label = format!("ce benchmarks={}", targets.join(","));
    let (outcomes, trace, stats) = run_campaign(cli, &config, &mut evaluator, label, |c| {
        let stock = c.space().stock_baseline();
        c.record(&stock, &targets, REFERENCE, |_, _| false)?;
        targets
            .iter()
            .map(|b| combined_elimination(c, b))
            .collect::<flagtune::Result<Vec<_>>>()
    })?;

    let reference = &trace.records[0];
    let space = evaluator.space();
    let mut entries = Vec::new();
    let mut ratios = Vec::new();
    for (bench, out) in targets.iter().zip(&outcomes) {
        let ratio = reference.time(bench).map(|r| out.time / r);
        ratios.extend(ratio);
        entries.push(final_entry(space, Some(bench), &out.config, Some(out.time), ratio)?);
    }
    write_final(&config.out.join("final.toml"), entries)?;
    let mean = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    finish_summary(
        &config.out,
        format!(
            "ce: {} configurations, {} evaluations, {} cache hits, final mean ratio {:.4}",
            trace.len(),
            stats.executions,
            stats.cache_hits,
            mean
        ),
    )
}

fn cmd_suite_ce(cli: &Cli, config: CampaignConfig, threshold: Option<f64>) -> Outcome {
    let mut evaluator = config.evaluator().map_err(usage)?;
    let targets = config.targets(&evaluator).map_err(usage)?;
    let mut params = config.suite_ce_params();
    if let Some(t) = threshold {
        params.threshold = t;
    }
    let label = format!(
        "suite-ce threshold={} aggregate={:?} benchmarks={}",
        params.threshold,
        params.aggregate,
        targets.join(",")
    );
    let (outcome, trace, stats) = run_campaign(cli, &config, &mut evaluator, label, |c| {
        suite_combined_elimination(c, &targets, &params)
    })?;

    let entry = final_entry(
        evaluator.space(),
        None,
        &outcome.config,
        None,
        Some(outcome.aggregate()),
    )?;
    write_final(&config.out.join("final.toml"), vec![entry])?;
    let mut ratios = String::from("# benchmark\treference\ttime\tratio\n");
    for ((b, t), (_, r)) in outcome.times.iter().zip(&outcome.reference) {
        writeln!(ratios, "{b}\t{r}\t{t}\t{}", t / r).expect("writing to a string");
    }
    write(&config.out.join("ratios.tsv"), &ratios)?;
    let worst = outcome.ratios().iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    finish_summary(
        &config.out,
        format!(
            "suite-ce: {} configurations, {} evaluations, {} cache hits, final aggregate ratio {:.4}, worst ratio {:.4}, {} toggles",
            trace.len(),
            stats.executions,
            stats.cache_hits,
            outcome.aggregate(),
            worst,
            outcome.applied.len()
        ),
    )
}

fn cmd_oracle(cli: &Cli, config: CampaignConfig, max_flags: Option<usize>, threshold: Option<f64>) -> Outcome {
    if cli.resume.is_some() {
        return Err(usage(anyhow!("oracle does not take --resume")));
    }
    if config.mode != Mode::Synthetic {
        return Err(usage(anyhow!("the oracle needs a synthetic model")));
    }
    let model = config.model().map_err(usage)?;
    let evaluator = flagtune::Evaluator::synthetic(model.clone());
    let targets = config.targets(&evaluator).map_err(usage)?;
    let max_flags = max_flags.unwrap_or(config.oracle.max_flags);
    let threshold = threshold
        .or(config.oracle.threshold)
        .unwrap_or(config.suite_ce.threshold);
    let space = model.space();
    let default_level = space.default_baseline.clone();

    let mut table = String::from("# benchmark\tscope\tbase_level\tbitstring\ttime\n");
    let mut rows = Vec::new();
    for bench in &targets {
        for (scope, level) in [("any", None), ("default-level", Some(default_level.as_str()))] {
            let opt = optimum(&model, bench, level, max_flags).map_err(usage)?;
            rows.push((bench.clone(), scope, opt));
        }
    }
    for (bench, scope, opt) in &rows {
        writeln!(
            table,
            "{bench}\t{scope}\t{}\t{}\t{}",
            opt.config.base_level,
            bits(&opt.config),
            opt.time
        )
        .expect("writing to a string");
    }
    let stock = space.stock_baseline();
    let suite = suite_optimum(
        &model,
        &targets,
        &stock,
        threshold,
        config.suite_ce.aggregate,
        max_flags,
    )
    .map_err(campaign_failure)?;
    writeln!(
        table,
        "# suite optimum at threshold {threshold}\n(suite)\tthreshold\t{}\t{}\t{}",
        suite.config.base_level,
        bits(&suite.config),
        suite.aggregate
    )
    .expect("writing to a string");

    create_dir(&config.out)?;
    write(&config.out.join("oracle.tsv"), &table)?;
    finish_summary(
        &config.out,
        format!(
            "oracle: {} benchmarks, {} flags, suite optimum aggregate ratio {:.4} at threshold {threshold}",
            targets.len(),
            space.len(),
            suite.aggregate
        ),
    )
}

fn bits(c: &Configuration) -> String {
    let b = c.bitstring();
    if b.is_empty() {
        "-".into()
    } else {
        b
    }
}

fn cmd_xval(cli: &Cli, config: CampaignConfig, k: Option<usize>) -> Outcome {
    if cli.resume.is_some() {
        return Err(usage(anyhow!("xval does not take --resume")));
    }
    let mut evaluator = config.evaluator().map_err(usage)?;
    let targets = config.targets(&evaluator).map_err(usage)?;
    let k = k.unwrap_or(config.xval.k);
    let plan = make_folds(&targets, k, config.seed).map_err(usage)?;
    let params = config.suite_ce_params();
    let result = run_xval(&mut evaluator, &params, &plan).map_err(campaign_failure)?;

    create_dir(&config.out)?;
    let mut report = String::from("# program\tfold\tratio\n");
    for fold in &result.folds {
        let dir = config.out.join(format!("fold-{}", fold.fold));
        create_dir(&dir)?;
        write(&dir.join("training-trace.tsv"), &fold.training_trace.to_tsv())?;
        write(&dir.join("test-trace.tsv"), &fold.test_trace.to_tsv())?;
        let entry = final_entry(
            evaluator.space(),
            None,
            &fold.config,
            None,
            Some(fold.training_aggregate),
        )?;
        write_final(&dir.join("final.toml"), vec![entry])?;
        for (p, r) in &fold.ratios {
            writeln!(report, "{p}\t{}\t{r}", fold.fold).expect("writing to a string");
        }
    }
    writeln!(report, "# mean test ratio\t{}", result.mean).expect("writing to a string");
    write(&config.out.join("xval.tsv"), &report)?;
    let stats = evaluator.stats();
    finish_summary(
        &config.out,
        format!(
            "xval: {k} folds, {} programs, {} evaluations, {} cache hits, mean test ratio {:.4}",
            targets.len(),
            stats.executions,
            stats.cache_hits,
            result.mean
        ),
    )
}

fn load_trace(path: &Path) -> Result<CampaignTrace, Failure> {
    CampaignTrace::load(path).map_err(usage)
}

fn cmd_report(cli: &Cli, traces: &[String], reference: Option<&Path>) -> Outcome {
    let mut labeled = Vec::with_capacity(traces.len());
    for spec in traces {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (stem, p)
            }
        };
        if labeled.iter().any(|(l, _): &(String, CampaignTrace)| *l == label) {
            return Err(usage(anyhow!("duplicate trace label {label:?}")));
        }
        labeled.push((label, load_trace(&path)?));
    }
    let plain: Vec<&CampaignTrace> = labeled.iter().map(|(_, t)| t).collect();
    let refs = match reference {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(usage)?;
            parse_reference(&text).map_err(usage)?
        }
        None => reference_times(&plain).map_err(usage)?,
    };
    let with_labels: Vec<(String, &CampaignTrace)> = labeled.iter().map(|(l, t)| (l.clone(), t)).collect();
    let cmp = compare_to_baseline(&with_labels, &refs).map_err(campaign_failure)?;

    let dir = out_dir(cli);
    create_dir(&dir)?;
    write(&dir.join("comparison.tsv"), &cmp.to_tsv())?;
    for (label, trace) in &labeled {
        // Only the benchmarks this campaign measured.
        let own: flagtune::analysis::ReferenceTimes = trace
            .benchmarks()
            .into_iter()
            .filter_map(|b| refs.get(&b).map(|t| (b, *t)))
            .collect();
        let series = floored_best_so_far(trace, &own).map_err(campaign_failure)?;
        write(&dir.join(format!("series-{label}.tsv")), &series.to_tsv())?;
    }
    finish_summary(
        &dir,
        format!(
            "report: {} traces, {} benchmarks, best-known mean ratio {:.4} (floored {:.4})",
            labeled.len(),
            cmp.rows.len(),
            cmp.mean,
            cmp.mean_floored
        ),
    )
}

#[derive(Serialize)]
struct PredictionFile {
    program: String,
    neighbor: String,
    distance: f64,
    base_level: String,
    bitstring: String,
    /// The neighbor's time under this configuration.
    neighbor_time: f64,
}

fn cmd_predict(cli: &Cli, features: &Path, training: &[PathBuf], query: &str) -> Outcome {
    let text = std::fs::read_to_string(features)
        .with_context(|| format!("reading {}", features.display()))
        .map_err(usage)?;
    let vectors = parse_features(&text).map_err(usage)?;
    let traces = training.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>, _>>()?;
    let tables = performance_tables(&traces.iter().collect::<Vec<_>>());
    let q = vectors
        .iter()
        .find(|v| v.program == query)
        .ok_or_else(|| usage(anyhow!("{query:?} is not in the feature table")))?;
    let set: Vec<_> = vectors
        .iter()
        .filter(|v| v.program != query)
        .map(|v| {
            (
                v.clone(),
                tables
                    .get(&v.program)
                    .cloned()
                    .unwrap_or_else(PerformanceTable::default),
            )
        })
        .collect();
    let p = predict_1nn(q, &set).map_err(campaign_failure)?;

    let dir = out_dir(cli);
    create_dir(&dir)?;
    let file = PredictionFile {
        program: query.to_string(),
        neighbor: p.neighbor.clone(),
        distance: p.distance,
        base_level: p.config.base_level.clone(),
        bitstring: p.config.bitstring(),
        neighbor_time: p.time,
    };
    write(
        &dir.join("prediction.toml"),
        &toml::to_string(&file).expect("prediction serializes"),
    )?;
    finish_summary(
        &dir,
        format!(
            "predict-1nn: {query} -> {} (nearest {}, distance {:.4})",
            p.config.key(),
            p.neighbor,
            p.distance
        ),
    )
}
