//! Trajectory-level metrics.
//!
//! All metrics start from the best-so-far (bsf) curve: the running best
//! oracle score of a trajectory, kept in original target units. bsf-AUC@k is
//! the mean of the first `k` curve values, negated for minimize tasks so that
//! larger is always better. bsf-Outcome@k is the curve value at `k`, in
//! original units.

mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{
    compute_metric_table, read_metric_table, write_metric_table, MetricName, MetricRow,
    TableContext, METRIC_TABLE_HEADER,
};

use crate::oracle::Dataset;
use crate::runner::Trajectory;
use crate::seed::rng_from_seed;
use crate::space::{Design, ParameterSpace, Value};
use crate::task::{Direction, OracleRange, TaskSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("horizon {k} outside 1..={len}")]
    InvalidHorizon { k: usize, len: usize },
    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("minimize curves need the task's worst value to define a fraction of the optimum")]
    MissingWorst,
    #[error("optimum and worst coincide")]
    DegenerateRange,
    #[error("no numeric parameters to measure distance on")]
    NoNumericParameters,
    #[error("expected a group of {expected} trajectories, got {got}")]
    GroupSizeMismatch { expected: usize, got: usize },
    #[error("group trajectories differ in task or length")]
    MixedGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub horizons: Vec<usize>,
    /// Floor on the GP-normalization denominator.
    pub epsilon: f64,
    pub optimum_fraction: f64,
    pub convergence_tolerance: f64,
    /// Optimizer name whose runs form the normalization baseline.
    pub baseline_optimizer: String,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            horizons: vec![5, 10, 15, 20, 25, 30],
            epsilon: 0.01,
            optimum_fraction: 0.99,
            convergence_tolerance: 0.01,
            baseline_optimizer: "gp_ucb".into(),
        }
    }
}

/// Running best of a trajectory's scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BsfCurve {
    pub values: Vec<f64>,
    pub direction: Direction,
}

impl BsfCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_horizon(&self, k: usize) -> Result<(), MetricError> {
        if k == 0 || k > self.values.len() {
            return Err(MetricError::InvalidHorizon {
                k,
                len: self.values.len(),
            });
        }
        Ok(())
    }
}

pub fn best_so_far(scores: &[f64], direction: Direction) -> Result<BsfCurve, MetricError> {
    let first = *scores.first().ok_or(MetricError::EmptyTrajectory)?;
    let mut best = first;
    let values = scores
        .iter()
        .map(|&s| {
            if direction.improves(s, best) {
                best = s;
            }
            best
        })
        .collect();
    Ok(BsfCurve { values, direction })
}

pub fn trajectory_curve(traj: &Trajectory) -> Result<BsfCurve, MetricError> {
    best_so_far(&traj.scores(), traj.direction)
}

/// Mean of curve values 1..=k; negated on minimize curves.
pub fn bsf_auc_at(curve: &BsfCurve, k: usize) -> Result<f64, MetricError> {
    curve.check_horizon(k)?;
    let mean = curve.values[..k].iter().sum::<f64>() / k as f64;
    Ok(curve.direction.orient(mean))
}

/// Curve value at iteration k (1-based), original units.
pub fn bsf_outcome_at(curve: &BsfCurve, k: usize) -> Result<f64, MetricError> {
    curve.check_horizon(k)?;
    Ok(curve.values[k - 1])
}

/// Number of iterations after the first where the curve strictly improves.
pub fn nis(curve: &BsfCurve) -> usize {
    curve
        .values
        .windows(2)
        .filter(|w| curve.direction.improves(w[1], w[0]))
        .count()
}

/// Relative gap to the baseline: `(auc - baseline) / max(|baseline|, epsilon)`.
pub fn gp_normalize(auc: f64, auc_baseline: f64, epsilon: f64) -> f64 {
    (auc - auc_baseline) / auc_baseline.abs().max(epsilon)
}

/// First iteration (1-based) at which the curve reaches `fraction` of
/// `target`.
///
/// Without `worst`, a maximize curve is compared directly:
/// `curve_k >= fraction * target`. With `worst`, the curve is first mapped
/// to fraction-of-optimum units (`target` = 1, `worst` = 0) and compared
/// against `fraction`; this is the only form available for minimize curves.
pub fn iter_to_fraction(
    curve: &BsfCurve,
    target: f64,
    fraction: f64,
    worst: Option<f64>,
) -> Result<Option<usize>, MetricError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(MetricError::InvalidFraction(fraction));
    }
    let hit = match worst {
        Some(worst) => {
            let normalized = fraction_of_optimum_curve(curve, target, worst)?;
            normalized.iter().position(|&v| v >= fraction)
        }
        None => {
            if curve.direction == Direction::Minimize {
                return Err(MetricError::MissingWorst);
            }
            curve.values.iter().position(|&v| v >= fraction * target)
        }
    };
    Ok(hit.map(|i| i + 1))
}

/// Per-iteration `(bsf - worst) / (optimum - worst)`; 1.0 is the optimum in
/// either direction.
pub fn fraction_of_optimum_curve(
    curve: &BsfCurve,
    optimum: f64,
    worst: f64,
) -> Result<Vec<f64>, MetricError> {
    if optimum == worst {
        return Err(MetricError::DegenerateRange);
    }
    Ok(curve
        .values
        .iter()
        .map(|v| (v - worst) / (optimum - worst))
        .collect())
}

/// Mean pairwise Euclidean distance between encoded designs; 0 for fewer
/// than two designs.
pub fn diversity(designs: &[Design], space: &ParameterSpace) -> f64 {
    let encoded: Vec<_> = designs.iter().map(|d| space.encode(d)).collect();
    let n = encoded.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += encoded[i].distance(&encoded[j]);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Distance from `design` to its nearest dataset row in z-scored numeric
/// space. Categoricals are ignored and missing numerics sit at z = 0 (the
/// column mean), on both the design and the dataset side.
pub fn proximity_d1(
    design: &Design,
    data: &Dataset,
    space: &ParameterSpace,
) -> Result<f64, MetricError> {
    let mut columns = Vec::new();
    for spec in space.numeric_params() {
        let values: Vec<f64> = data.column(&spec.name).filter_map(Value::as_num).collect();
        if values.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        columns.push((spec.name.as_str(), mean, sd));
    }
    if columns.is_empty() || data.is_empty() {
        return Err(MetricError::NoNumericParameters);
    }
    let z = |d: &Design, (name, mean, sd): (&str, f64, f64)| {
        d.get(name)
            .and_then(Value::as_num)
            .map_or(0.0, |x| (x - mean) / sd)
    };
    let point: Vec<f64> = columns.iter().map(|&c| z(design, c)).collect();
    let best = data
        .rows
        .iter()
        .map(|row| {
            columns
                .iter()
                .zip(&point)
                .map(|(&c, p)| {
                    let d = p - z(&row.design, c);
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

/// Standard group size for trajectory rewards.
pub const GRPO_GROUP_SIZE: usize = 8;

/// Per-trajectory reward: mean of the bsf curve (oriented so larger is
/// better), centered and scaled by the group's population standard
/// deviation. A zero-variance group gets all-zero rewards.
pub fn grpo_group_rewards(
    group: &[Trajectory],
    allow_any_size: bool,
) -> Result<Vec<f64>, MetricError> {
    if !allow_any_size && group.len() != GRPO_GROUP_SIZE {
        return Err(MetricError::GroupSizeMismatch {
            expected: GRPO_GROUP_SIZE,
            got: group.len(),
        });
    }
    let Some(first) = group.first() else {
        return Ok(Vec::new());
    };
    if group
        .iter()
        .any(|t| t.task != first.task || t.steps.len() != first.steps.len())
    {
        return Err(MetricError::MixedGroup);
    }
    let raw = group
        .iter()
        .map(|t| {
            let curve = trajectory_curve(t)?;
            bsf_auc_at(&curve, curve.len())
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(normalize_group(&raw))
}

/// `(x - mean) / std` with the population standard deviation.
pub fn normalize_group(raw: &[f64]) -> Vec<f64> {
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= f64::EPSILON * mean.abs().max(1.0) {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|r| (r - mean) / sd).collect()
}

/// Best and worst oracle predictions over `samples` uniform draws from the
/// task's space, in original units and direction-aware.
pub fn estimate_oracle_range(task: &TaskSpec, samples: usize, seed: u64) -> OracleRange {
    let mut rng = rng_from_seed(seed);
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..samples.max(1) {
        let d = task.space.sample_uniform(&mut rng);
        let s = task.score(&d);
        hi = hi.max(s);
        lo = lo.min(s);
    }
    match task.direction {
        Direction::Maximize => OracleRange {
            optimum: hi,
            worst: lo,
        },
        Direction::Minimize => OracleRange {
            optimum: lo,
            worst: hi,
        },
    }
}

/// Best and worst measured targets of the dataset, direction-aware.
pub fn dataset_range(data: &Dataset) -> OracleRange {
    let hi = data.targets().fold(f64::NEG_INFINITY, f64::max);
    let lo = data.targets().fold(f64::INFINITY, f64::min);
    match data.direction {
        Direction::Maximize => OracleRange {
            optimum: hi,
            worst: lo,
        },
        Direction::Minimize => OracleRange {
            optimum: lo,
            worst: hi,
        },
    }
}
