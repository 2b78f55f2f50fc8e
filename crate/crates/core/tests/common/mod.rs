#![allow(dead_code)]

use bsfbench_core::oracle::Row;
use bsfbench_core::seed::rng_from_seed;
use bsfbench_core::{Dataset, Design, Direction, ParameterSpace, ParameterSpec};
use rand::Rng;

/// Two numerics and one three-option categorical.
pub fn mixed_space() -> ParameterSpace {
    ParameterSpace::new(
        "mixed",
        vec![
            ParameterSpec::numeric("temperature", 20.0, 80.0).unwrap(),
            ParameterSpec::numeric("time", 0.0, 10.0).unwrap(),
            ParameterSpec::categorical("ligand", ["common", "rare", "other"]).unwrap(),
        ],
    )
    .unwrap()
}

pub fn mixed_target(d: &Design) -> f64 {
    let t = d
        .get("temperature")
        .and_then(|v| v.as_num())
        .unwrap_or(50.0);
    let h = d.get("time").and_then(|v| v.as_num()).unwrap_or(5.0);
    let bump = match d.get("ligand").and_then(|v| v.as_cat()) {
        Some("rare") => 20.0,
        Some("other") => 5.0,
        _ => 0.0,
    };
    0.5 * t - 0.3 * (h - 6.0) * (h - 6.0) + bump
}

/// `n` uniform rows of the mixed space scored by `mixed_target` plus
/// seeded noise of scale `noise`.
pub fn mixed_dataset(n: usize, seed: u64, noise: f64, direction: Direction) -> Dataset {
    let space = mixed_space();
    let mut rng = rng_from_seed(seed);
    let rows = (0..n)
        .map(|_| {
            let design = space.sample_uniform(&mut rng);
            let target = mixed_target(&design) + noise * (rng.random::<f64>() - 0.5);
            Row { design, target }
        })
        .collect();
    Dataset::new(&space, rows, "y", direction).unwrap()
}
