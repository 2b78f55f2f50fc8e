//! Percentile bootstraps over grouped samples.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::replicate_rng;
use crate::stats::{quantile_sorted, Alternative, StatResult, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Resample groups with replacement.
    TaskLevel,
    /// Resample groups, then resample values within each drawn group.
    TwoLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub mode: BootstrapMode,
    pub replicates: usize,
    pub seed: u64,
    /// Lower and upper percentile levels as fractions.
    pub levels: (f64, f64),
    /// Value the two-sided bootstrap p-value is computed against.
    pub null: f64,
}

impl BootstrapSpec {
    pub fn new(mode: BootstrapMode, replicates: usize, seed: u64) -> Self {
        Self {
            mode,
            replicates,
            seed,
            levels: (0.025, 0.975),
            null: 0.0,
        }
    }
}

/// Mean over groups of each group's mean.
pub fn mean_of_group_means(groups: &[Vec<f64>]) -> f64 {
    groups
        .iter()
        .map(|g| g.iter().sum::<f64>() / g.len() as f64)
        .sum::<f64>()
        / groups.len() as f64
}

/// Percentile bootstrap CI of `stat` over grouped samples. The statistic
/// is the point estimate on the original groups. The p-value is twice the
/// smaller fraction of replicates on either side of `spec.null`.
///
/// Replicate `b` draws from its own seeded stream, so the result does not
/// depend on the number of worker threads.
pub fn bootstrap_ci<F>(
    groups: &[Vec<f64>],
    stat: F,
    spec: &BootstrapSpec,
) -> Result<StatResult, StatsError>
where
    F: Fn(&[Vec<f64>]) -> f64 + Sync,
{
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups {
            needed: 2,
            got: groups.len(),
        });
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(StatsError::Empty);
    }
    if spec.replicates < 100 {
        return Err(StatsError::InvalidArgument(format!(
            "{} replicates, at least 100 needed",
            spec.replicates
        )));
    }
    let (lo_level, hi_level) = spec.levels;
    if !(0.0 <= lo_level && lo_level < hi_level && hi_level <= 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "percentile levels {:?}",
            spec.levels
        )));
    }
    let point = stat(groups);
    let g = groups.len();
    let mut replicates: Vec<f64> = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(spec.seed, b);
            let sample: Vec<Vec<f64>> = (0..g)
                .map(|_| {
                    let group = &groups[rng.random_range(0..g)];
                    match spec.mode {
                        BootstrapMode::TaskLevel => group.clone(),
                        BootstrapMode::TwoLevel => (0..group.len())
                            .map(|_| group[rng.random_range(0..group.len())])
                            .collect(),
                    }
                })
                .collect();
            stat(&sample)
        })
        .collect();
    replicates.sort_by(f64::total_cmp);
    let b = replicates.len() as f64;
    let below = replicates.iter().filter(|&&r| r <= spec.null).count() as f64 / b;
    let above = replicates.iter().filter(|&&r| r >= spec.null).count() as f64 / b;
    let method = match spec.mode {
        BootstrapMode::TaskLevel => "bootstrap_task_level",
        BootstrapMode::TwoLevel => "bootstrap_two_level",
    };
    let mut result = StatResult::new(
        point,
        (2.0 * below.min(above)).min(1.0),
        method,
        g,
        Alternative::TwoSided,
    );
    result.ci_low = Some(quantile_sorted(&replicates, lo_level));
    result.ci_high = Some(quantile_sorted(&replicates, hi_level));
    Ok(result)
}
