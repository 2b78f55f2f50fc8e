//! Rank-based and sign-flip tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;

use crate::seed::replicate_rng;
use crate::stats::{slack, std_normal, Alternative, StatResult, StatsError};
use rand::Rng;

/// Largest sample size (after dropping zeros) with an exact Wilcoxon null.
pub const WILCOXON_EXACT_MAX: usize = 20;

/// Largest number of label assignments enumerated by the exact
/// Mann-Whitney distribution.
pub const MANN_WHITNEY_EXACT_MAX: f64 = 1e6;

/// Ranks starting at 1, ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of the tie groups of `values`.
fn tie_sizes(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}

/// Combines the two tails of an exact null distribution.
fn exact_p(lower: f64, upper: f64, alternative: Alternative) -> f64 {
    match alternative {
        Alternative::Greater => upper,
        Alternative::Less => lower,
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
    }
}

/// Normal tail with continuity correction for a statistic `s` with null mean
/// `mu` and standard deviation `sd`.
fn normal_p(s: f64, mu: f64, sd: f64, alternative: Alternative) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let n = std_normal();
    match alternative {
        Alternative::Greater => n.sf((s - mu - 0.5) / sd),
        Alternative::Less => n.cdf((s - mu + 0.5) / sd),
        Alternative::TwoSided => (2.0 * n.sf(((s - mu).abs() - 0.5).max(0.0) / sd)).min(1.0),
    }
}

/// Wilcoxon signed-rank test on paired differences. The statistic is the sum
/// of the ranks of positive differences. Zero differences are dropped and
/// ties share midranks. The null distribution is enumerated exactly for up
/// to [`WILCOXON_EXACT_MAX`] non-zero differences.
pub fn wilcoxon_signed_rank(
    diffs: &[f64],
    alternative: Alternative,
) -> Result<StatResult, StatsError> {
    if diffs.is_empty() {
        return Err(StatsError::Empty);
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 {
        return Ok(
            StatResult::new(0.0, 1.0, "wilcoxon_exact", 0, alternative).flagged("all_zero_diffs")
        );
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&nonzero)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();

    if n <= WILCOXON_EXACT_MAX {
        // Doubled midranks are integers; count sign patterns by subset sum.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        for &r in &doubled {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let patterns = 2f64.powi(n as i32);
        let observed = (2.0 * w_plus).round() as usize;
        let lower = counts[..=observed].iter().sum::<f64>() / patterns;
        let upper = counts[observed..].iter().sum::<f64>() / patterns;
        let p = exact_p(lower, upper, alternative);
        return Ok(StatResult::new(w_plus, p, "wilcoxon_exact", n, alternative));
    }
    let nf = n as f64;
    let mu = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes(&abs)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum::<f64>()
        / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let p = normal_p(w_plus, mu, var.max(0.0).sqrt(), alternative);
    Ok(StatResult::new(
        w_plus,
        p,
        "wilcoxon_normal",
        n,
        alternative,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MannWhitneyMethod {
    /// Exact when there are no ties and at most [`MANN_WHITNEY_EXACT_MAX`]
    /// label assignments; otherwise the normal approximation.
    #[default]
    Auto,
    /// Exact permutation distribution of the midrank statistic.
    Exact,
    /// Normal approximation with tie and continuity corrections.
    Asymptotic,
}

fn ln_choose(n: usize, k: usize) -> f64 {
    statrs::function::factorial::ln_binomial(n as u64, k as u64)
}

/// Mann-Whitney U test. The statistic is U for `a`: the number of pairs
/// with `a_i > b_j` plus half the tied pairs. `Greater` tests whether `a`
/// tends to exceed `b`.
pub fn mann_whitney_u(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: MannWhitneyMethod,
) -> Result<StatResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;
    let ties = tie_sizes(&pooled);
    let has_ties = ties.iter().any(|&t| t > 1);
    let exact = match method {
        MannWhitneyMethod::Exact => true,
        MannWhitneyMethod::Asymptotic => false,
        MannWhitneyMethod::Auto => {
            !has_ties && ln_choose(n1 + n2, n1) <= MANN_WHITNEY_EXACT_MAX.ln()
        }
    };
    let n = n1 + n2;
    if exact {
        // Count subsets of size n1 by their doubled rank sum.
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut dp = vec![vec![0.0f64; total + 1]; n1 + 1];
        dp[0][0] = 1.0;
        for &r in &doubled {
            for k in (1..=n1).rev() {
                let (prev, cur) = dp.split_at_mut(k);
                for s in (r..=total).rev() {
                    cur[0][s] += prev[k - 1][s - r];
                }
            }
        }
        let counts = &dp[n1];
        let assignments: f64 = counts.iter().sum();
        let observed = (2.0 * rank_sum).round() as usize;
        let lower = counts[..=observed].iter().sum::<f64>() / assignments;
        let upper = counts[observed..].iter().sum::<f64>() / assignments;
        let p = exact_p(lower, upper, alternative);
        return Ok(StatResult::new(u, p, "mann_whitney_exact", n, alternative));
    }
    let (f1, f2, nf) = (n1 as f64, n2 as f64, n as f64);
    let mu = f1 * f2 / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let p = normal_p(u, mu, var.max(0.0).sqrt(), alternative);
    Ok(StatResult::new(u, p, "mann_whitney_normal", n, alternative))
}

/// Spearman's rho (Pearson on midranks) and Kendall's tau-b.
pub fn rank_correlation(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(StatsError::InvalidArgument("need at least 2 pairs".into()));
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let spearman = sxy / (sxx * syy).sqrt();
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j])
                .partial_cmp(&0.0)
                .unwrap_or(std::cmp::Ordering::Equal) as i64;
            let dy = (y[i] - y[j])
                .partial_cmp(&0.0)
                .unwrap_or(std::cmp::Ordering::Equal) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tied_x += 1,
                (_, 0) => tied_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + tied_x) as f64;
    let n2 = (concordant + discordant + tied_y) as f64;
    let kendall = (concordant - discordant) as f64 / (n1 * n2).sqrt();
    Ok((spearman, kendall))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn as_extreme(permuted: f64, observed: f64, alternative: Alternative) -> bool {
    match alternative {
        Alternative::Greater => permuted >= observed - slack(observed),
        Alternative::Less => permuted <= observed + slack(observed),
        Alternative::TwoSided => permuted.abs() >= observed.abs() - slack(observed),
    }
}

/// Sign-flip permutation test on the mean of paired differences: each of
/// `replicates` draws flips every difference's sign with probability 1/2.
/// The p-value is `(count + 1) / (replicates + 1)`.
pub fn paired_sign_permutation(
    diffs: &[f64],
    replicates: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<StatResult, StatsError> {
    if diffs.is_empty() {
        return Err(StatsError::Empty);
    }
    let observed = mean(diffs);
    let count: usize = (0..replicates as u64)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = replicate_rng(seed, b);
            let permuted = diffs
                .iter()
                .map(|d| if rng.random::<bool>() { *d } else { -*d })
                .sum::<f64>()
                / diffs.len() as f64;
            as_extreme(permuted, observed, alternative)
        })
        .count();
    let p = (count + 1) as f64 / (replicates + 1) as f64;
    Ok(StatResult::new(
        observed,
        p,
        "sign_flip_permutation",
        diffs.len(),
        alternative,
    ))
}

/// Exact sign-flip p-value over all `2^n` patterns (n ≤ 24).
pub fn sign_flip_exact(diffs: &[f64], alternative: Alternative) -> Result<StatResult, StatsError> {
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    if n > 24 {
        return Err(StatsError::InvalidArgument(format!(
            "{n} differences are too many to enumerate"
        )));
    }
    let observed = mean(diffs);
    let patterns = 1u64 << n;
    let count = (0..patterns)
        .into_par_iter()
        .filter(|mask| {
            let s: f64 = diffs
                .iter()
                .enumerate()
                .map(|(i, d)| if mask >> i & 1 == 1 { -*d } else { *d })
                .sum();
            as_extreme(s / n as f64, observed, alternative)
        })
        .count();
    Ok(StatResult::new(
        observed,
        count as f64 / patterns as f64,
        "sign_flip_exact",
        n,
        alternative,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilcoxon_anchors() {
        let six =
            wilcoxon_signed_rank(&[0.4, 1.2, 0.3, 2.0, 0.9, 0.05], Alternative::TwoSided).unwrap();
        assert_eq!(six.p_value, 2.0 / 64.0);
        let five = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], Alternative::TwoSided).unwrap();
        assert_eq!(five.p_value, 0.0625);
        let zeros = wilcoxon_signed_rank(&[0.0, 0.0], Alternative::TwoSided).unwrap();
        assert_eq!(
            (zeros.p_value, zeros.flag.as_deref()),
            (1.0, Some("all_zero_diffs"))
        );
    }

    #[test]
    fn wilcoxon_normal_branch() {
        let diffs: Vec<f64> = (1..=30)
            .map(|i| if i % 4 == 0 { -(i as f64) } else { i as f64 })
            .collect();
        let r = wilcoxon_signed_rank(&diffs, Alternative::Greater).unwrap();
        assert_eq!(r.method, "wilcoxon_normal");
        assert!(r.p_value < 0.01);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney_u(
            &[1.0, 2.0, 3.0],
            &[4.0, 5.0, 6.0],
            Alternative::Less,
            MannWhitneyMethod::Auto,
        )
        .unwrap();
        assert!((r.p_value - 0.05).abs() < 1e-15);
        assert_eq!(r.statistic, 0.0);
        let same = mann_whitney_u(
            &[1.0, 2.0, 3.0],
            &[1.0, 2.0, 3.0],
            Alternative::TwoSided,
            MannWhitneyMethod::Auto,
        )
        .unwrap();
        assert!(same.p_value > 0.9);
    }

    #[test]
    fn mann_whitney_rating_example() {
        let anchored = [3.0, 3.0, 4.0, 3.0, 2.0, 4.0];
        let responsive = [5.0, 4.0, 4.0, 5.0, 4.0, 3.0];
        let r = mann_whitney_u(
            &anchored,
            &responsive,
            Alternative::Less,
            MannWhitneyMethod::Auto,
        )
        .unwrap();
        assert_eq!(r.method, "mann_whitney_normal");
        assert!((r.p_value - 0.031).abs() < 5e-4, "{}", r.p_value);
    }

    #[test]
    fn kendall_example() {
        let (rho, tau) = rank_correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((tau - 2.0 / 3.0).abs() < 1e-15);
        assert!((rho - 0.8).abs() < 1e-12);
        let (rho, tau) = rank_correlation(&[1.0, 2.0, 3.0], &[9.0, 5.0, 1.0]).unwrap();
        assert_eq!((rho, tau), (-1.0, -1.0));
        assert_eq!(
            rank_correlation(&[1.0, 1.0], &[1.0, 2.0]),
            Err(StatsError::ZeroVariance)
        );
    }

    #[test]
    fn permutation_edges() {
        let r = paired_sign_permutation(&[0.0; 5], 500, 1, Alternative::TwoSided).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = paired_sign_permutation(&[0.7], 4000, 2, Alternative::Greater).unwrap();
        assert!((r.p_value - 0.5).abs() < 0.03);
        assert_eq!(
            sign_flip_exact(&[0.7], Alternative::Greater)
                .unwrap()
                .p_value,
            0.5
        );
    }
}
