use bsfbench_core::metrics::{best_so_far, bsf_auc_at, bsf_outcome_at, diversity};
use bsfbench_core::seed::rng_from_seed;
use bsfbench_core::{Design, Direction, ParameterSpace, ParameterSpec};
use proptest::prelude::*;

fn space() -> ParameterSpace {
    ParameterSpace::new(
        "s",
        vec![
            ParameterSpec::numeric("load", 0.5, 5.0).unwrap(),
            ParameterSpec::categorical("metal", ["pd", "ni", "cu", "fe"]).unwrap(),
        ],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constant_curves_give_equal_auc_and_outcome(c in -1e3f64..1e3, len in 1usize..40, minimize in any::<bool>()) {
        let direction = if minimize { Direction::Minimize } else { Direction::Maximize };
        let curve = best_so_far(&vec![c; len], direction).unwrap();
        for k in 1..=len {
            let auc = bsf_auc_at(&curve, k).unwrap();
            let outcome = direction.orient(bsf_outcome_at(&curve, k).unwrap());
            prop_assert!((auc - outcome).abs() <= 1e-12 * c.abs().max(1.0));
        }
    }

    #[test]
    fn diversity_is_unchanged_by_masking(seed in any::<u64>(), n in 1usize..12) {
        let space = space();
        let mut rng = rng_from_seed(seed);
        let designs: Vec<Design> = (0..n).map(|_| space.sample_uniform(&mut rng)).collect();
        let (masked_space, names) = space.mask();
        let masked: Vec<Design> = designs.iter().map(|d| names.mask_design(d).unwrap()).collect();
        prop_assert_eq!(diversity(&designs, &space), diversity(&masked, &masked_space));
    }
}
