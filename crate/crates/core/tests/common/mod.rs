#![allow(dead_code)]

use std::path::PathBuf;

use flagtune::evaluator::{JointState, ModelBenchmark, PairDelta, SyntheticModel};
use flagtune::{FlagDescriptor, FlagSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn demo_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("demo").join(name)
}

pub fn demo_model(name: &str) -> SyntheticModel {
    let dir = demo_dir(name);
    let space = FlagSpace::load(&dir.join("flags.toml")).unwrap();
    SyntheticModel::load(&dir.join("model.toml"), space).unwrap()
}

pub fn space(n: usize) -> FlagSpace {
    let flags = (0..n).map(|i| FlagDescriptor::gcc(&format!("f{i}"))).collect();
    FlagSpace::new(vec!["O1".into(), "O2".into(), "O3".into()], "O3", flags).unwrap()
}

// Deltas sit on a quarter-second grid and bases are whole seconds, so every
// modeled time is exact and equal sums compare equal.
fn grid(rng: &mut ChaCha8Rng, half_range: i32) -> f64 {
    rng.gen_range(-4 * half_range..=4 * half_range) as f64 / 4.0
}

/// One benchmark whose flags act independently of each other.
pub fn random_additive(seed: u64, n: usize) -> SyntheticModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ModelBenchmark::new("b", rng.gen_range(60..200) as f64);
    b.level_multiplier.insert("O1".into(), 1.25);
    b.level_multiplier.insert("O2".into(), 1.125);
    for i in 0..n {
        if rng.gen_bool(0.8) {
            b.flag_delta.insert(format!("f{i}"), grid(&mut rng, 4));
        }
        if rng.gen_bool(0.5) {
            b.flag_delta_disabled.insert(format!("f{i}"), grid(&mut rng, 4));
        }
    }
    SyntheticModel::new(space(n), vec![b]).unwrap()
}

/// A suite with flag interactions and a stock baseline that leaves some
/// flags disabled.
pub fn random_suite(seed: u64, n_benches: usize, n_flags: usize) -> SyntheticModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flags = (0..n_flags)
        .map(|i| {
            let mut f = FlagDescriptor::gcc(&format!("f{i}"));
            if rng.gen_bool(0.3) {
                f.enabled_at = Some(vec!["O2".into()]);
            }
            f
        })
        .collect();
    let space = FlagSpace::new(vec!["O1".into(), "O2".into(), "O3".into()], "O3", flags).unwrap();
    let states = [
        JointState::BothEnabled,
        JointState::BothDisabled,
        JointState::FirstOnly,
        JointState::SecondOnly,
    ];
    let benches = (0..n_benches)
        .map(|j| {
            let mut b = ModelBenchmark::new(format!("b{j}"), rng.gen_range(80..200) as f64);
            for i in 0..n_flags {
                if rng.gen_bool(0.6) {
                    b.flag_delta.insert(format!("f{i}"), grid(&mut rng, 5));
                }
                if rng.gen_bool(0.6) {
                    b.flag_delta_disabled.insert(format!("f{i}"), grid(&mut rng, 5));
                }
            }
            if n_flags >= 2 {
                for _ in 0..rng.gen_range(0..=3) {
                    let a = rng.gen_range(0..n_flags);
                    let c = (a + rng.gen_range(1..n_flags)) % n_flags;
                    b.pair_delta.push(PairDelta {
                        flags: [format!("f{a}"), format!("f{c}")],
                        state: states[rng.gen_range(0..4)],
                        delta: grid(&mut rng, 5),
                    });
                }
            }
            b
        })
        .collect();
    SyntheticModel::new(space, benches).unwrap()
}

/// 80 programs that all gain from disabling `common`, plus `fac`, which only
/// gains from disabling `unique`.
pub fn unique_requirement_model() -> SyntheticModel {
    let flags = vec![FlagDescriptor::gcc("common"), FlagDescriptor::gcc("unique")];
    let space = FlagSpace::new(vec!["O2".into(), "O3".into()], "O3", flags).unwrap();
    let mut benches: Vec<ModelBenchmark> = (0..80)
        .map(|i| {
            let mut b = ModelBenchmark::new(format!("p{i:02}"), 50.0 + i as f64);
            b.flag_delta_disabled.insert("common".into(), -5.0);
            b
        })
        .collect();
    let mut fac = ModelBenchmark::new("fac", 40.0);
    fac.flag_delta_disabled.insert("unique".into(), -10.0);
    benches.push(fac);
    SyntheticModel::new(space, benches).unwrap()
}
