//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test --test acceptance`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{demo_model, random_additive, random_suite, unique_requirement_model};
use flagtune::analysis::{
    floored_best_so_far, make_folds, predict_1nn, reference_times, run_xval, FeatureVector, PerformanceTable,
};
use flagtune::evaluator::{EvalCache, SyntheticBackend, SyntheticModel};
use flagtune::oracle::{optimum, DEFAULT_MAX_FLAGS};
use flagtune::search::{
    combined_elimination, random_iterative, rip, run_ce, run_ric, run_suite_ce, suite_combined_elimination, Campaign,
    CampaignTrace, Checkpoint, StopPolicy, SuiteCeParams,
};
use flagtune::{Configuration, Error, Evaluator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rip_arithmetic() -> Check {
    for (t, b, want) in [(110.0, 100.0, 10.0), (100.0, 100.0, 0.0), (150.0, 200.0, -25.0)] {
        let got = rip(t, b);
        ensure!((got - want).abs() <= 1e-12, "rip({t}, {b}) = {got}, want {want}");
    }
    Ok("(110,100)=+10, (100,100)=0, (150,200)=-25".into())
}

fn ce_matches_oracle() -> Check {
    let mut total_flags = 0;
    for seed in 0..100u64 {
        let n = (seed % 13) as usize;
        total_flags += n;
        let model = random_additive(1000 + seed, n);
        let mut ev = Evaluator::synthetic(model.clone());
        let (config, _) = run_ce(&mut ev, "b").map_err(|e| e.to_string())?;
        let time = model.time(&config, "b").map_err(|e| e.to_string())?;
        let opt = optimum(&model, "b", Some("O3"), DEFAULT_MAX_FLAGS).map_err(|e| e.to_string())?;
        ensure!(
            time == opt.time,
            "model {seed} ({n} flags): CE {time}, oracle {}",
            opt.time
        );
    }
    Ok(format!("100 additive models, {total_flags} flags in total, all exact"))
}

fn pair_pathology() -> Check {
    let model = demo_model("pair");
    let bench = "cover".to_string();
    let reference = model.time(&model.space().stock_baseline(), &bench).unwrap();

    let mut ev = Evaluator::synthetic(model.clone());
    let (config, _) = run_ce(&mut ev, &bench).map_err(|e| e.to_string())?;
    let ce = model.time(&config, &bench).unwrap() / reference;
    let oracle = optimum(&model, &bench, None, DEFAULT_MAX_FLAGS).unwrap().time / reference;
    let mut ev = Evaluator::synthetic(model);
    let trace = run_ric(&mut ev, std::slice::from_ref(&bench), 200, 3).map_err(|e| e.to_string())?;
    let ric = trace
        .records
        .iter()
        .filter_map(|r| r.time(&bench))
        .fold(f64::INFINITY, f64::min)
        / reference;
    ensure!(ce == 1.0, "CE ratio {ce}");
    ensure!(oracle == 0.9, "oracle ratio {oracle}");
    ensure!(ric == 0.9, "RIC ratio {ric}");
    Ok(format!("CE {ce:.2}, oracle {oracle:.2}, RIC(200) {ric:.2}"))
}

fn suite_threshold_guarantee() -> Check {
    let mut campaigns = 0;
    for seed in 0..50u64 {
        let model = random_suite(2000 + seed, 1 + (seed % 6) as usize, (seed % 11) as usize);
        let suite = model.benchmark_names();
        for t in [0.0, 2.0, 5.0] {
            let mut ev = Evaluator::synthetic(model.clone());
            let (out, _) =
                run_suite_ce(&mut ev, &suite, &SuiteCeParams::with_threshold(t)).map_err(|e| e.to_string())?;
            for ((b, time), (_, reference)) in out.times.iter().zip(&out.reference) {
                ensure!(
                    *time <= (1.0 + t / 100.0) * reference,
                    "suite {seed}, t={t}: {b} at {time} vs reference {reference}"
                );
            }
            ensure!(
                out.aggregate() <= 1.0,
                "suite {seed}, t={t}: aggregate {}",
                out.aggregate()
            );
            ensure!(
                out.history.windows(2).all(|w| w[1] <= w[0]),
                "suite {seed}, t={t}: aggregate rose: {:?}",
                out.history
            );
            campaigns += 1;
        }
    }
    Ok(format!(
        "{campaigns} campaigns within threshold, aggregates non-increasing"
    ))
}

fn threshold_tradeoff() -> Check {
    let model = demo_model("tradeoff");
    let suite = model.benchmark_names();
    let mut rows = Vec::new();
    for t in 0..=6 {
        let mut ev = Evaluator::synthetic(model.clone());
        let (out, _) =
            run_suite_ce(&mut ev, &suite, &SuiteCeParams::with_threshold(t as f64)).map_err(|e| e.to_string())?;
        let worse = out.ratios().iter().filter(|(_, r)| *r > 1.0).count();
        rows.push((t, worse, out.aggregate()));
    }
    for w in rows.windows(2) {
        ensure!(
            w[1].1 >= w[0].1,
            "worse count fell from t={} to t={}: {rows:?}",
            w[0].0,
            w[1].0
        );
        ensure!(
            w[1].2 <= w[0].2,
            "aggregate rose from t={} to t={}: {rows:?}",
            w[0].0,
            w[1].0
        );
    }
    let shape: Vec<String> = rows.iter().map(|(t, w, a)| format!("t={t}:{w}/{a:.4}")).collect();
    Ok(format!("worse/aggregate {}", shape.join(" ")))
}

fn cache_contract() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("cache.jsonl");
    let model = demo_model("pair");
    let bench = vec!["cover".to_string()];
    let evaluator = |model: &SyntheticModel| -> Result<Evaluator, String> {
        let cache = EvalCache::open(&path).map_err(|e| e.to_string())?;
        Ok(Evaluator::new(Box::new(SyntheticBackend::new(model.clone())), cache))
    };

    let mut cold = evaluator(&model)?;
    let cold_trace = run_ric(&mut cold, &bench, 200, 3).map_err(|e| e.to_string())?;
    let cold_runs = cold.stats().executions;
    let distinct: BTreeSet<String> = cold_trace
        .records
        .iter()
        .flat_map(|r| {
            r.measurements
                .iter()
                .map(|(b, m)| format!("{b} {}", m.digest.as_ref().unwrap()))
        })
        .collect();
    ensure!(
        cold_runs == distinct.len(),
        "{cold_runs} executions for {} distinct digests",
        distinct.len()
    );
    drop(cold);

    let mut warm = evaluator(&model)?;
    let warm_trace = run_ric(&mut warm, &bench, 200, 3).map_err(|e| e.to_string())?;
    ensure!(
        warm.stats().executions == 0,
        "warm run executed {} times",
        warm.stats().executions
    );
    ensure!(
        warm_trace
            .records
            .iter()
            .all(|r| r.measurements.iter().all(|(_, m)| m.cached)),
        "warm measurement without cached marker"
    );
    ensure!(
        warm_trace.without_cache_markers() == cold_trace.without_cache_markers(),
        "warm trace differs from cold trace"
    );
    Ok(format!(
        "cold: {cold_runs} executions = {} distinct digests; warm: 0 executions, identical trace",
        distinct.len()
    ))
}

fn floored_series() -> Check {
    let model = demo_model("pair");
    let mut ev = Evaluator::synthetic(model);
    let trace = run_ric(&mut ev, &["cover".to_string()], 200, 3).map_err(|e| e.to_string())?;
    let refs = reference_times(&[&trace]).map_err(|e| e.to_string())?;
    let series = floored_best_so_far(&trace, &refs).map_err(|e| e.to_string())?;
    ensure!(
        series.points.iter().all(|(_, v)| *v > 0.0 && *v <= 1.0),
        "value outside (0, 1]"
    );
    ensure!(series.points.windows(2).all(|w| w[1].1 <= w[0].1), "series increases");
    let first = trace
        .records
        .iter()
        .find(|r| r.config.assignment.iter().all(|on| !on))
        .ok_or("no both-disabled sample in the trace")?
        .seq;
    let drop = series
        .points
        .iter()
        .find(|(_, v)| *v < 1.0)
        .ok_or("series never drops")?;
    ensure!(
        *drop == (first, 0.9),
        "series first drops at {drop:?}, first both-disabled sample is {first}"
    );
    Ok(format!(
        "drops to 0.90 at configuration {first}, the first both-disabled sample"
    ))
}

fn xval_hygiene() -> Check {
    let model = unique_requirement_model();
    let programs = model.benchmark_names();
    let plan = make_folds(&programs, 10, 5).map_err(|e| e.to_string())?;
    let sizes: BTreeSet<usize> = plan.sizes().into_iter().collect();
    ensure!(sizes == BTreeSet::from([8, 9]), "fold sizes {:?}", plan.sizes());

    let mut ev = Evaluator::synthetic(model);
    let result = run_xval(&mut ev, &SuiteCeParams::with_threshold(5.0), &plan).map_err(|e| e.to_string())?;
    let mut seen = BTreeSet::new();
    for fold in &result.folds {
        for b in fold.training_trace.benchmarks() {
            ensure!(!fold.test.contains(&b), "fold {} trained on held-out {b}", fold.fold);
        }
        for (p, _) in &fold.ratios {
            ensure!(seen.insert(p.clone()), "{p} tested twice");
        }
    }
    ensure!(
        seen.len() == programs.len(),
        "{} of {} programs tested",
        seen.len(),
        programs.len()
    );
    let fac = result
        .ratios()
        .into_iter()
        .find(|(p, _)| p == "fac")
        .ok_or("fac not tested")?;
    ensure!(fac.1 == 1.0, "unique-requirement program tested at {}", fac.1);
    Ok(format!(
        "81 programs in folds of {:?}, disjoint and exhaustive; unique-requirement program at 1.0",
        sizes
    ))
}

fn nn_contract() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cases = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..12);
        let dim = rng.gen_range(1..8);
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-50.0..50.0)).collect())
            .collect();
        let tables: Vec<PerformanceTable> = (0..n)
            .map(|i| PerformanceTable {
                entries: vec![
                    (Configuration::new("O2", vec![i % 2 == 0; 3]), 2.0),
                    (
                        Configuration::new("O3", (0..3).map(|b| (i >> b) & 1 == 1).collect()),
                        1.0,
                    ),
                ],
            })
            .collect();
        let scale: Vec<f64> = (0..dim)
            .map(|_| rng.gen_range(0.05..20.0) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 })
            .collect();
        let shift: Vec<f64> = (0..dim).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let training = |f: &dyn Fn(usize, f64) -> f64| -> Vec<(FeatureVector, PerformanceTable)> {
            raw.iter()
                .zip(&tables)
                .enumerate()
                .map(|(i, (x, t))| {
                    let features = x.iter().enumerate().map(|(j, v)| f(j, *v)).collect();
                    (
                        FeatureVector {
                            program: format!("p{i}"),
                            features,
                        },
                        t.clone(),
                    )
                })
                .collect()
        };
        let id = |_: usize, v: f64| v;
        let affine = |j: usize, v: f64| scale[j] * v + shift[j];

        let target = rng.gen_range(0..n);
        let query = FeatureVector {
            program: "q".into(),
            features: raw[target].clone(),
        };
        let p = predict_1nn(&query, &training(&id)).map_err(|e| e.to_string())?;
        // Duplicate vectors resolve to the earliest, which shares the same features.
        ensure!(
            raw[p.neighbor[1..].parse::<usize>().unwrap()] == raw[target],
            "identity query missed"
        );
        ensure!(
            p.config == tables[target].best().unwrap().0,
            "identity query returned {}",
            p.config
        );

        let q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-60.0..60.0)).collect();
        let plain = predict_1nn(
            &FeatureVector {
                program: "q".into(),
                features: q.clone(),
            },
            &training(&id),
        )
        .map_err(|e| e.to_string())?;
        let moved: Vec<f64> = q.iter().enumerate().map(|(j, v)| affine(j, *v)).collect();
        let rescaled = predict_1nn(
            &FeatureVector {
                program: "q".into(),
                features: moved,
            },
            &training(&affine),
        )
        .map_err(|e| e.to_string())?;
        ensure!(
            plain.neighbor == rescaled.neighbor,
            "rescaling moved the neighbor {} -> {}",
            plain.neighbor,
            rescaled.neighbor
        );
        ensure!(plain.config == rescaled.config, "rescaling changed the configuration");
        cases += 1;
    }
    Ok(format!("{cases} random datasets: identity and affine invariance hold"))
}

type Search<'a> = &'a dyn Fn(&mut Campaign<'_>) -> flagtune::Result<()>;

fn resumed(model: &SyntheticModel, budget: usize, search: Search<'_>) -> Result<(CampaignTrace, usize), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("checkpoint.json");
    let mut checkpoint: Option<Checkpoint> = None;
    let mut interruptions = 0;
    loop {
        let mut ev = Evaluator::synthetic(model.clone());
        let mut campaign = Campaign::new(&mut ev)
            .with_label("acceptance")
            .with_stop(StopPolicy::after(budget))
            .with_checkpoint(&path, Duration::from_secs(3600));
        if let Some(cp) = checkpoint.take() {
            campaign = campaign.resume(cp).map_err(|e| e.to_string())?;
        }
        match search(&mut campaign) {
            Ok(()) => return Ok((campaign.finish().map_err(|e| e.to_string())?, interruptions)),
            Err(Error::Interrupted { .. }) => {
                interruptions += 1;
                checkpoint = Some(Checkpoint::load(&path).map_err(|e| e.to_string())?);
            }
            Err(e) => return Err(e.to_string()),
        }
    }
}

fn determinism_and_resume() -> Check {
    let model = demo_model("tradeoff");
    let suite = model.benchmark_names();
    let params = SuiteCeParams::with_threshold(5.0);
    let ric = |c: &mut Campaign<'_>| random_iterative(c, &suite, 60, 17);
    let ce = |c: &mut Campaign<'_>| combined_elimination(c, "aha-mont").map(|_| ());
    let sce = |c: &mut Campaign<'_>| suite_combined_elimination(c, &suite, &params).map(|_| ());
    let searches: [(&str, Search<'_>); 3] = [("ric", &ric), ("ce", &ce), ("suite-ce", &sce)];

    let mut resumes = 0;
    for (name, search) in searches {
        let straight = || -> Result<String, String> {
            let mut ev = Evaluator::synthetic(model.clone());
            let mut campaign = Campaign::new(&mut ev);
            search(&mut campaign).map_err(|e| e.to_string())?;
            Ok(campaign.finish().map_err(|e| e.to_string())?.to_tsv())
        };
        let first = straight()?;
        ensure!(first == straight()?, "{name}: repeated run differs");
        for budget in [1, 13, 97] {
            let (trace, n) = resumed(&model, budget, search)?;
            ensure!(
                trace.to_tsv() == first,
                "{name}: resumed run with budget {budget} differs"
            );
            resumes += n;
        }
    }
    Ok(format!(
        "byte-identical reruns; {resumes} interrupt/resume cycles reproduce the full traces"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("RIP arithmetic", rip_arithmetic),
        ("CE equals oracle on additive models", ce_matches_oracle),
        ("flag-pair pathology", pair_pathology),
        ("suite-CE threshold guarantee", suite_threshold_guarantee),
        ("threshold trade-off shape", threshold_tradeoff),
        ("cache contract", cache_contract),
        ("floored best-so-far series", floored_series),
        ("cross-validation hygiene", xval_hygiene),
        ("1NN contract", nn_contract),
        ("determinism and resume", determinism_and_resume),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
