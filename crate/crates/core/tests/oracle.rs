mod common;

use bsfbench_core::oracle::ridge::RidgeModel;
use bsfbench_core::oracle::tree::{ForestParams, RandomForest};
use bsfbench_core::oracle::{fit_oracle, loo_r2, FittedModel, Row};
use bsfbench_core::seed::rng_from_seed;
use bsfbench_core::{Dataset, Direction, Family, OracleModel};
use common::{mixed_dataset, mixed_space};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn brute_loo(data: &Dataset, family: Family, hyper: usize, seed: u64) -> f64 {
    let space = mixed_space();
    let n = data.rows.len();
    let mean = data.rows.iter().map(|r| r.target).sum::<f64>() / n as f64;
    let ss_tot: f64 = data
        .rows
        .iter()
        .map(|r| (r.target - mean) * (r.target - mean))
        .sum();
    let mut ss_res = 0.0;
    for i in 0..n {
        let train_rows: Vec<Row> = data
            .rows
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, r)| r.clone())
            .collect();
        let train = Dataset::new(&space, train_rows, "y", data.direction).unwrap();
        let model = FittedModel::fit(&space, &train, family, hyper, seed).unwrap();
        let err = data.rows[i].target - model.predict(&space, &data.rows[i].design);
        ss_res += err * err;
    }
    1.0 - ss_res / ss_tot
}

#[test]
fn loo_matches_brute_force_loop_exactly() {
    let data = mixed_dataset(16, 3, 4.0, Direction::Maximize);
    let space = mixed_space();
    for (family, hyper) in [
        (Family::Ridge, 0),
        (Family::Ridge, 3),
        (Family::RandomForest, 0),
        (Family::GradientBoosting, 0),
    ] {
        let got = loo_r2(&space, &data, family, hyper, 11).unwrap();
        assert_eq!(
            got,
            brute_loo(&data, family, hyper, 11),
            "{family}[{hyper}]"
        );
    }
}

#[test]
fn fit_is_reproducible_and_serialization_is_exact() {
    let data = mixed_dataset(20, 5, 2.0, Direction::Maximize);
    let space = mixed_space();
    let a = fit_oracle(&space, &data, 9, &Family::ALL).unwrap();
    let b = fit_oracle(&space, &data, 9, &Family::ALL).unwrap();
    assert_eq!(a, b);
    let json = a.to_json();
    let back = OracleModel::from_json(&json).unwrap();
    assert_eq!(back.to_json(), json);
    let mut rng = rng_from_seed(1);
    for _ in 0..50 {
        let d = space.sample_uniform(&mut rng);
        assert_eq!(
            a.predict(&space, &d).to_bits(),
            back.predict(&space, &d).to_bits()
        );
    }
}

fn ols_predictions(x: &[Vec<f64>], y: &[f64], queries: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let p = x[0].len();
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[i][j - 1] });
    let beta = design
        .clone()
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-12)
        .unwrap();
    queries
        .iter()
        .map(|q| {
            beta[0]
                + q.iter()
                    .zip(beta.iter().skip(1))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect()
}

#[test]
fn ridge_approaches_least_squares_on_noiseless_linear_data() {
    let mut rng = rng_from_seed(21);
    let x: Vec<Vec<f64>> = (0..25)
        .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|r| 2.0 * r[0] - 0.5 * r[1] + 3.0 * r[2] + 7.0)
        .collect();
    let queries: Vec<Vec<f64>> = (0..20)
        .map(|_| (0..3).map(|_| rng.random_range(-6.0..6.0)).collect())
        .collect();
    let expected = ols_predictions(&x, &y, &queries);
    let model = RidgeModel::fit(&x, &y, 1e-10).unwrap();
    for (q, e) in queries.iter().zip(expected) {
        let got = model.predict(q);
        assert!((got - e).abs() <= 1e-6 * e.abs().max(1.0), "{got} vs {e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_predictions_stay_within_target_range(
        seed in any::<u64>(),
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 2), -100.0f64..100.0), 4..20),
        query in prop::collection::vec(-10.0f64..10.0, 2),
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let params = ForestParams { n_trees: 20, min_leaf: 1 };
        let forest = RandomForest::fit(&x, &y, params, seed);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p = forest.predict(&query);
        prop_assert!(p >= lo - 1e-9 * lo.abs().max(1.0) && p <= hi + 1e-9 * hi.abs().max(1.0));
    }
}
