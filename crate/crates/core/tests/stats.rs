use bsfbench_core::seed::rng_from_seed;
use bsfbench_core::stats::{
    binomial_sign_test, bootstrap_ci, fisher_exact_2x2, mann_whitney_u, mean_of_group_means,
    rank_correlation, sign_flip_exact, wilcoxon_signed_rank, BootstrapMode, BootstrapSpec,
    MannWhitneyMethod,
};
use bsfbench_core::Alternative;
use proptest::prelude::*;
use rand::Rng;

const SIDES: [Alternative; 3] = [
    Alternative::TwoSided,
    Alternative::Greater,
    Alternative::Less,
];

/// Rank of each value among `pool`, ties sharing the mean position.
fn brute_midrank(v: f64, pool: &[f64]) -> f64 {
    let less = pool.iter().filter(|&&x| x < v).count() as f64;
    let equal = pool.iter().filter(|&&x| x == v).count() as f64;
    less + (equal + 1.0) / 2.0
}

fn tails(null: &[f64], observed: f64) -> (f64, f64) {
    let n = null.len() as f64;
    let lower = null.iter().filter(|&&s| s <= observed + 1e-9).count() as f64 / n;
    let upper = null.iter().filter(|&&s| s >= observed - 1e-9).count() as f64 / n;
    (lower, upper)
}

fn combine(lower: f64, upper: f64, alt: Alternative) -> f64 {
    match alt {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
    }
}

fn brute_wilcoxon(diffs: &[f64], alt: Alternative) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks: Vec<f64> = abs.iter().map(|&a| brute_midrank(a, &abs)).collect();
    let observed: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, x)| **x > 0.0)
        .map(|(r, _)| r)
        .sum();
    let null: Vec<f64> = (0u32..1 << d.len())
        .map(|mask| {
            (0..d.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum()
        })
        .collect();
    let (lo, hi) = tails(&null, observed);
    combine(lo, hi, alt)
}

fn brute_mann_whitney(a: &[f64], b: &[f64], alt: Alternative) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks: Vec<f64> = pooled.iter().map(|&v| brute_midrank(v, &pooled)).collect();
    let observed: f64 = ranks[..a.len()].iter().sum();
    let null: Vec<f64> = (0u32..1 << pooled.len())
        .filter(|m| m.count_ones() as usize == a.len())
        .map(|mask| {
            (0..pooled.len())
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i])
                .sum()
        })
        .collect();
    let (lo, hi) = tails(&null, observed);
    combine(lo, hi, alt)
}

fn brute_sign_flip(diffs: &[f64], alt: Alternative) -> f64 {
    let n = diffs.len();
    let observed = diffs.iter().sum::<f64>() / n as f64;
    let null: Vec<f64> = (0u32..1 << n)
        .map(|mask| {
            (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        -diffs[i]
                    } else {
                        diffs[i]
                    }
                })
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let (lo, hi) = tails(&null, observed);
    match alt {
        Alternative::TwoSided => {
            null.iter()
                .filter(|s| s.abs() >= observed.abs() - 1e-9)
                .count() as f64
                / null.len() as f64
        }
        _ => combine(lo, hi, alt),
    }
}

fn small_ints(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-8i32..=8).prop_map(f64::from), len)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wilcoxon_equals_enumeration(diffs in small_ints(1..13)) {
        prop_assume!(diffs.iter().any(|d| *d != 0.0));
        for alt in SIDES {
            let got = wilcoxon_signed_rank(&diffs, alt).unwrap().p_value;
            prop_assert!(close(got, brute_wilcoxon(&diffs, alt)), "{alt:?}: {got}");
        }
    }

    #[test]
    fn mann_whitney_equals_enumeration(a in small_ints(1..7), b in small_ints(1..7)) {
        for alt in SIDES {
            let got = mann_whitney_u(&a, &b, alt, MannWhitneyMethod::Exact).unwrap().p_value;
            prop_assert!(close(got, brute_mann_whitney(&a, &b, alt)), "{alt:?}: {got}");
        }
    }

    #[test]
    fn sign_flip_equals_enumeration(diffs in small_ints(1..13)) {
        for alt in SIDES {
            let got = sign_flip_exact(&diffs, alt).unwrap().p_value;
            prop_assert!(close(got, brute_sign_flip(&diffs, alt)), "{alt:?}: {got}");
        }
    }

    #[test]
    fn rank_tests_ignore_positive_rescaling(
        a in small_ints(2..10),
        b in small_ints(2..10),
        scale in 0.01f64..100.0,
    ) {
        let s = |v: &[f64]| v.iter().map(|x| x * scale).collect::<Vec<f64>>();
        for alt in SIDES {
            if a.iter().any(|d| *d != 0.0) {
                let p = wilcoxon_signed_rank(&a, alt).unwrap().p_value;
                let q = wilcoxon_signed_rank(&s(&a), alt).unwrap().p_value;
                prop_assert_eq!(p, q);
            }
            for method in [MannWhitneyMethod::Auto, MannWhitneyMethod::Asymptotic] {
                let p = mann_whitney_u(&a, &b, alt, method).unwrap().p_value;
                let q = mann_whitney_u(&s(&a), &s(&b), alt, method).unwrap().p_value;
                prop_assert_eq!(p, q);
            }
        }
        let n = a.len().min(b.len());
        if let (Ok(r), Ok(t)) = (rank_correlation(&a[..n], &b[..n]), rank_correlation(&s(&a[..n]), &s(&b[..n]))) {
            prop_assert_eq!(r, t);
        }
    }

    #[test]
    fn one_sided_never_exceeds_two_sided(
        a in small_ints(1..10),
        b in small_ints(1..10),
        k in 0u64..=20,
        extra in 0u64..=20,
        table in prop::array::uniform4(0u64..12),
    ) {
        let check = |f: &dyn Fn(Alternative) -> f64| {
            let one = f(Alternative::Greater).min(f(Alternative::Less));
            one <= f(Alternative::TwoSided) + 1e-12
        };
        if a.iter().any(|d| *d != 0.0) {
            prop_assert!(check(&|alt| wilcoxon_signed_rank(&a, alt).unwrap().p_value));
        }
        for method in [MannWhitneyMethod::Exact, MannWhitneyMethod::Asymptotic] {
            prop_assert!(check(&|alt| mann_whitney_u(&a, &b, alt, method).unwrap().p_value));
        }
        prop_assert!(check(&|alt| sign_flip_exact(&a, alt).unwrap().p_value));
        prop_assert!(check(&|alt| binomial_sign_test(k, k + extra, 0.5, alt).unwrap().p_value));
        let t = [[table[0], table[1]], [table[2], table[3]]];
        prop_assert!(check(&|alt| fisher_exact_2x2(t, alt).p_value));
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn mean_width(per_group: usize) -> f64 {
    let mut rng = rng_from_seed(40 + per_group as u64);
    let datasets = 40;
    let mut total = 0.0;
    for d in 0..datasets {
        let groups: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let effect = 0.5 * gaussian(&mut rng);
                (0..per_group)
                    .map(|_| effect + 2.0 * gaussian(&mut rng))
                    .collect()
            })
            .collect();
        let spec = BootstrapSpec::new(BootstrapMode::TwoLevel, 400, d);
        let r = bootstrap_ci(&groups, mean_of_group_means, &spec).unwrap();
        total += r.ci_high.unwrap() - r.ci_low.unwrap();
    }
    total / datasets as f64
}

#[test]
fn bootstrap_intervals_shrink_as_groups_grow() {
    let widths: Vec<f64> = [2, 4, 8, 16].into_iter().map(mean_width).collect();
    for w in widths.windows(2) {
        assert!(w[1] <= w[0], "{widths:?}");
    }
}
