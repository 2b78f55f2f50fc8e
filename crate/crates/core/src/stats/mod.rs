//! Resampling, rank and exact tests.
//!
//! Conventions: one-sided alternatives are stated for the first sample (or
//! for the differences), two-sided exact p-values double the smaller tail
//! (rank tests) or sum all outcomes no more likely than the observed one
//! (binomial and Fisher), and every p-value is clamped to [0, 1].

mod bootstrap;
mod rank;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

pub use bootstrap::{bootstrap_ci, mean_of_group_means, BootstrapMode, BootstrapSpec};
pub use rank::{
    mann_whitney_u, midranks, paired_sign_permutation, rank_correlation, sign_flip_exact,
    wilcoxon_signed_rank, MannWhitneyMethod,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("input is empty")]
    Empty,
    #[error("need at least {needed} groups, got {got}")]
    TooFewGroups { needed: usize, got: usize },
    #[error("inputs differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all values of one input are equal")]
    ZeroVariance,
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// The first sample (or the differences) tends to be larger.
    Greater,
    Less,
}

impl Alternative {
    pub fn sidedness(self) -> &'static str {
        match self {
            Alternative::TwoSided => "two",
            _ => "one",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub statistic: f64,
    pub p_value: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub method: String,
    pub n: usize,
    pub alternative: Alternative,
    /// Set when the result is a convention rather than a computed value,
    /// for example `all_zero_diffs` or `degenerate_table`.
    pub flag: Option<String>,
}

impl StatResult {
    fn new(statistic: f64, p_value: f64, method: &str, n: usize, alternative: Alternative) -> Self {
        Self {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            ci_low: None,
            ci_high: None,
            method: method.to_string(),
            n,
            alternative,
            flag: None,
        }
    }

    fn flagged(mut self, flag: &str) -> Self {
        self.flag = Some(flag.to_string());
        self
    }
}

/// Median; the mean of the middle two for even lengths. NaN when empty.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Relative slack used when comparing a test statistic with its reference
/// distribution, so outcomes equal up to rounding count as equally extreme.
pub(crate) fn slack(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Exact binomial test of `successes` out of `n` against success
/// probability `p0`.
pub fn binomial_sign_test(
    successes: u64,
    n: u64,
    p0: f64,
    alternative: Alternative,
) -> Result<StatResult, StatsError> {
    if successes > n {
        return Err(StatsError::InvalidArgument(format!(
            "{successes} successes out of {n}"
        )));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(StatsError::InvalidArgument(format!("p0 = {p0}")));
    }
    let pmf = |k: u64| -> f64 {
        if p0 == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if p0 == 1.0 {
            return if k == n { 1.0 } else { 0.0 };
        }
        (ln_binomial(n, k) + k as f64 * p0.ln() + (n - k) as f64 * (1.0 - p0).ln()).exp()
    };
    let p = match alternative {
        Alternative::Greater => (successes..=n).map(pmf).sum(),
        Alternative::Less => (0..=successes).map(pmf).sum(),
        Alternative::TwoSided => {
            let observed = pmf(successes);
            (0..=n)
                .map(pmf)
                .filter(|&q| q <= observed * (1.0 + 1e-7))
                .sum()
        }
    };
    let stat = if n > 0 {
        successes as f64 / n as f64
    } else {
        0.0
    };
    Ok(StatResult::new(
        stat,
        p,
        "binomial_exact",
        n as usize,
        alternative,
    ))
}

/// Fisher's exact test on `[[a, b], [c, d]]`. `Greater` tests whether `a`
/// is larger than expected under fixed margins (odds ratio > 1).
pub fn fisher_exact_2x2(table: [[u64; 2]; 2], alternative: Alternative) -> StatResult {
    let [[a, b], [c, d]] = table;
    let (r1, r2, c1) = (a + b, c + d, a + c);
    let n = r1 + r2;
    let odds = if b * c == 0 {
        f64::INFINITY
    } else {
        (a * d) as f64 / (b * c) as f64
    };
    if r1 == 0 || r2 == 0 || c1 == 0 || c1 == n {
        return StatResult::new(odds, 1.0, "fisher_exact", n as usize, alternative)
            .flagged("degenerate_table");
    }
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let pmf = |x: u64| (ln_binomial(r1, x) + ln_binomial(r2, c1 - x) - ln_binomial(n, c1)).exp();
    let p = match alternative {
        Alternative::Greater => (a..=hi).map(pmf).sum(),
        Alternative::Less => (lo..=a).map(pmf).sum(),
        Alternative::TwoSided => {
            let observed = pmf(a);
            (lo..=hi)
                .map(pmf)
                .filter(|&q| q <= observed * (1.0 + 1e-7))
                .sum()
        }
    };
    StatResult::new(odds, p, "fisher_exact", n as usize, alternative)
}

/// Wilson score interval for a binomial proportion at confidence `level`.
pub fn wilson_interval(successes: u64, n: u64, level: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 || successes > n {
        return Err(StatsError::InvalidArgument(format!(
            "{successes} successes out of {n}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "confidence level {level}"
        )));
    }
    let z = std_normal().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let high = if successes == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    Ok((low, high))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn quantile_type7() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert!((quantile_sorted(&v, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn binomial_examples() {
        let r = binomial_sign_test(13, 18, 0.5, Alternative::Greater).unwrap();
        // sum_{k=13}^{18} C(18,k) / 2^18 = 12616 / 262144
        assert!((r.p_value - 12616.0 / 262144.0).abs() < 1e-12);
        assert!((r.p_value - 0.048).abs() <= 0.001);
        for n in 1..12 {
            let r = binomial_sign_test(n, n, 0.5, Alternative::Greater).unwrap();
            assert!((r.p_value - 0.5f64.powi(n as i32)).abs() < 1e-14);
        }
        assert!(
            binomial_sign_test(5, 10, 0.5, Alternative::Greater)
                .unwrap()
                .p_value
                > 0.5
        );
        assert!(binomial_sign_test(11, 10, 0.5, Alternative::Greater).is_err());
        let two = binomial_sign_test(13, 18, 0.5, Alternative::TwoSided).unwrap();
        assert!((two.p_value - 2.0 * 12616.0 / 262144.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_examples() {
        let r = fisher_exact_2x2([[2, 0], [0, 2]], Alternative::Greater);
        assert!((r.p_value - 1.0 / 6.0).abs() < 1e-12);
        let r = fisher_exact_2x2([[1, 1], [1, 1]], Alternative::Greater);
        assert!((r.p_value - 5.0 / 6.0).abs() < 1e-12);
        let r = fisher_exact_2x2([[0, 0], [3, 2]], Alternative::Greater);
        assert_eq!(
            (r.p_value, r.flag.as_deref()),
            (1.0, Some("degenerate_table"))
        );
        let two = fisher_exact_2x2([[2, 0], [0, 2]], Alternative::TwoSided);
        assert!((two.p_value - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_examples() {
        assert_eq!(wilson_interval(0, 7, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_interval(7, 7, 0.95).unwrap().1, 1.0);
        // 5 of 10: symmetric about the Wilson center, which is exactly 0.5.
        let (lo, hi) = wilson_interval(5, 10, 0.95).unwrap();
        let z: f64 = 1.959_963_984_540_054;
        let half = z / (1.0 + z * z / 10.0) * (0.025 + z * z / 400.0).sqrt();
        assert!((lo - (0.5 - half)).abs() < 1e-12);
        assert!((hi - (0.5 + half)).abs() < 1e-12);
        // 3 of 10: center pulled toward 1/2.
        let (lo, hi) = wilson_interval(3, 10, 0.95).unwrap();
        assert!((lo + hi) / 2.0 > 0.3);
    }
}
