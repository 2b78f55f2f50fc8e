//! Audit of optimizer behaviour against the best design in the source
//! dataset.
//!
//! Functions that need the oracle take a scoring closure so that the same
//! code runs on fitted oracles and on hand-written lookup tables.

mod report;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    audit_task, summary_table, write_summary_table, AuditReport, ConditionMatch, ModalRankTally,
    SummaryRow, SUMMARY_SUBSETS,
};

use crate::oracle::{modal_value, Dataset};
use crate::runner::Trajectory;
use crate::space::{Design, ParamKind, ParameterSpace, Value};
use crate::stats::median;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("column `{0}` has no observed values")]
    NoObservedValues(String),
    #[error("space has no categorical columns")]
    NoCategoricalColumns,
    #[error("the published-best row is missing every categorical column")]
    NoUsableColumn,
    #[error("all row predictions are equal")]
    DegenerateScores,
    #[error("column `{0}` has a single observed value")]
    SingleValueColumn(String),
    #[error("`{0}` is not a categorical column of the space")]
    NotCategorical(String),
    #[error("the published-best row has no value in `{0}`")]
    MissingPublishedValue(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditThresholds {
    pub alignment_min: f64,
    pub range_gap_min: f64,
    pub sigma_gap_min: f64,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        Self {
            alignment_min: 0.95,
            range_gap_min: 0.10,
            sigma_gap_min: 0.5,
        }
    }
}

/// Per-value statistic used by the runner-up criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupingStat {
    /// Best observed target among rows with the value.
    #[default]
    Best,
    /// Mean target among rows with the value.
    Mean,
}

/// Index of the row with the best target; ties keep the lowest index.
pub fn published_best_row(data: &Dataset) -> Result<usize, AuditError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in data.targets().enumerate() {
        if best.is_none_or(|(_, b)| data.direction.improves(t, b)) {
            best = Some((i, t));
        }
    }
    best.map(|(i, _)| i).ok_or(AuditError::EmptyDataset)
}

/// Modal value of a categorical column; ties go to the lexicographically
/// smallest value.
pub fn literature_typical_value(data: &Dataset, column: &str) -> Result<String, AuditError> {
    modal_value(data.column(column).filter_map(Value::as_cat))
        .ok_or_else(|| AuditError::NoObservedValues(column.into()))
}

/// Observed values of a column with their counts, most frequent first;
/// equal counts are ordered lexicographically.
pub fn value_frequencies(data: &Dataset, column: &str) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in data.column(column).filter_map(Value::as_cat) {
        *counts.entry(v).or_default() += 1;
    }
    let mut out: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(k, c)| (k.to_string(), c))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Design with every numeric at its observed median and every categorical
/// at its observed mode. Unobserved columns are left out.
pub fn reference_design(data: &Dataset, space: &ParameterSpace) -> Design {
    let mut d = Design::new();
    for spec in space.params() {
        match spec.kind {
            ParamKind::Numeric { .. } => {
                let mut values: Vec<f64> =
                    data.column(&spec.name).filter_map(Value::as_num).collect();
                if !values.is_empty() {
                    d.insert(spec.name.clone(), Value::Num(median(&mut values)));
                }
            }
            ParamKind::Categorical { .. } => {
                if let Some(mode) = modal_value(data.column(&spec.name).filter_map(Value::as_cat)) {
                    d.insert(spec.name.clone(), Value::Cat(mode));
                }
            }
        }
    }
    d
}

fn check_categorical(space: &ParameterSpace, column: &str) -> Result<(), AuditError> {
    match space.param(column) {
        Some(spec) if !spec.is_numeric() => Ok(()),
        _ => Err(AuditError::NotCategorical(column.into())),
    }
}

/// Oracle score of each observed value of `column` with every other
/// parameter at the reference design, ordered by dataset frequency rank.
pub fn oracle_reward_profile(
    score: &dyn Fn(&Design) -> f64,
    data: &Dataset,
    space: &ParameterSpace,
    column: &str,
) -> Result<Vec<(String, f64)>, AuditError> {
    check_categorical(space, column)?;
    let reference = reference_design(data, space);
    Ok(value_frequencies(data, column)
        .into_iter()
        .map(|(value, _)| {
            let design = reference.clone().cat(column, value.as_str());
            (value, score(&design))
        })
        .collect())
}

/// Categorical columns with their oracle-score spread (max - min over the
/// reward profile), largest spread first; equal spreads keep declaration
/// order.
pub fn categorical_spreads(
    score: &dyn Fn(&Design) -> f64,
    data: &Dataset,
    space: &ParameterSpace,
) -> Result<Vec<(String, f64)>, AuditError> {
    let mut out = Vec::new();
    for spec in space.categorical_params() {
        let profile = oracle_reward_profile(score, data, space, &spec.name)?;
        if profile.is_empty() {
            continue;
        }
        let hi = profile
            .iter()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        out.push((spec.name.clone(), hi - lo));
    }
    if space.categorical_params().next().is_none() {
        return Err(AuditError::NoCategoricalColumns);
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(out)
}

/// The max-spread categorical column for which the published-best row has
/// a value.
pub fn key_categorical(
    score: &dyn Fn(&Design) -> f64,
    data: &Dataset,
    space: &ParameterSpace,
) -> Result<String, AuditError> {
    let spreads = categorical_spreads(score, data, space)?;
    let best = &data.rows[published_best_row(data)?].design;
    spreads
        .into_iter()
        .map(|(name, _)| name)
        .find(|name| best.get(name).is_some())
        .ok_or(AuditError::NoUsableColumn)
}

/// Position of the published-best row's oracle score within the range of
/// all row scores, oriented so that 1 means it scores best.
pub fn alignment_ratio(score: &dyn Fn(&Design) -> f64, data: &Dataset) -> Result<f64, AuditError> {
    let best = published_best_row(data)?;
    let scores: Vec<f64> = data.rows.iter().map(|r| score(&r.design)).collect();
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == lo {
        return Err(AuditError::DegenerateScores);
    }
    let s = scores[best];
    let ratio = match data.direction {
        crate::task::Direction::Maximize => (s - lo) / (hi - lo),
        crate::task::Direction::Minimize => (hi - s) / (hi - lo),
    };
    Ok(ratio.clamp(0.0, 1.0))
}

/// Which proposals count towards a match rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchAt {
    /// Iteration `k` (1-based) of each trajectory.
    Iter(usize),
    All,
}

/// Fraction of counted proposals whose `column` value equals `best_value`.
/// Missing values and trajectories shorter than `k` count as non-matches.
pub fn best_match_rate(
    trajectories: &[Trajectory],
    column: &str,
    best_value: &str,
    at: MatchAt,
) -> f64 {
    let is_match = |d: &Design| d.get(column).and_then(Value::as_cat) == Some(best_value);
    let (hits, total) = match at {
        MatchAt::Iter(k) => {
            let hits = trajectories
                .iter()
                .filter(|t| k >= 1 && t.steps.get(k - 1).is_some_and(|s| is_match(&s.design)))
                .count();
            (hits, trajectories.len())
        }
        MatchAt::All => {
            let hits = trajectories
                .iter()
                .flat_map(|t| t.designs())
                .filter(|d| is_match(d))
                .count();
            (hits, trajectories.iter().map(|t| t.steps.len()).sum())
        }
    };
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub divergent: bool,
    pub criterion_r: bool,
    pub criterion_s: bool,
    pub published_value: String,
    pub typical_value: String,
    pub runner_up_value: Option<String>,
    /// Oriented gap between the published value's statistic and the
    /// runner-up's, as a fraction of the target range.
    pub range_gap: f64,
    /// Oriented gap between the published-best target and the best target
    /// among literature-typical rows, in target standard deviations.
    pub sigma_gap: f64,
}

impl Divergence {
    pub fn criteria_label(&self) -> &'static str {
        match (self.criterion_r, self.criterion_s) {
            (true, true) => "R+S",
            (true, false) => "R",
            (false, true) => "S",
            (false, false) => "none",
        }
    }
}

/// Classifies a task as literature-divergent on `column`.
///
/// The range criterion (`criterion_r`) compares the published-best value's
/// per-value statistic with the best other value's, relative to the target
/// range. The sigma criterion (`criterion_s`) compares the published-best target with the best target among rows with
/// the literature-typical value, relative to the sample standard deviation
/// of all targets. Both comparisons are `>=`. A task whose typical value is
/// the published-best value is never divergent.
pub fn classify_divergence(
    data: &Dataset,
    column: &str,
    thresholds: &AuditThresholds,
    grouping: GroupingStat,
) -> Result<Divergence, AuditError> {
    let dir = data.direction;
    let best_row = &data.rows[published_best_row(data)?];
    let published_value = best_row
        .design
        .get(column)
        .and_then(Value::as_cat)
        .ok_or_else(|| AuditError::MissingPublishedValue(column.into()))?
        .to_string();
    let typical_value = literature_typical_value(data, column)?;

    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &data.rows {
        if let Some(v) = r.design.get(column).and_then(Value::as_cat) {
            groups.entry(v).or_default().push(r.target);
        }
    }
    if groups.len() < 2 {
        return Err(AuditError::SingleValueColumn(column.into()));
    }
    let not_divergent = Divergence {
        divergent: false,
        criterion_r: false,
        criterion_s: false,
        published_value: published_value.clone(),
        typical_value: typical_value.clone(),
        runner_up_value: None,
        range_gap: 0.0,
        sigma_gap: 0.0,
    };
    if typical_value == published_value {
        return Ok(not_divergent);
    }
    let best_of = |ts: &[f64]| {
        ts.iter().copied().fold(f64::NAN, |a, t| {
            if a.is_nan() || dir.improves(t, a) {
                t
            } else {
                a
            }
        })
    };
    let stat = |ts: &[f64]| match grouping {
        GroupingStat::Best => best_of(ts),
        GroupingStat::Mean => ts.iter().sum::<f64>() / ts.len() as f64,
    };
    let published_stat = stat(&groups[published_value.as_str()]);
    let (runner_up_value, runner_up_stat) = groups
        .iter()
        .filter(|(v, _)| **v != published_value)
        .map(|(v, ts)| (v.to_string(), stat(ts)))
        .fold(None::<(String, f64)>, |acc, (v, s)| match acc {
            Some((_, a)) if !dir.improves(s, a) => acc,
            _ => Some((v, s)),
        })
        .expect("at least two values");

    let targets: Vec<f64> = data.targets().collect();
    let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let sd = if targets.len() > 1 {
        (targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let range_diff = dir.orient(published_stat - runner_up_stat);
    let typical_best = best_of(&groups[typical_value.as_str()]);
    let sigma_diff = dir.orient(best_row.target - typical_best);
    let criterion_r = hi > lo && range_diff >= thresholds.range_gap_min * (hi - lo);
    let criterion_s = sd > 0.0 && sigma_diff >= thresholds.sigma_gap_min * sd;
    Ok(Divergence {
        divergent: criterion_r || criterion_s,
        criterion_r,
        criterion_s,
        runner_up_value: Some(runner_up_value),
        range_gap: if hi > lo { range_diff / (hi - lo) } else { 0.0 },
        sigma_gap: if sd > 0.0 { sigma_diff / sd } else { 0.0 },
        ..not_divergent
    })
}

/// The trajectory's most proposed value in `column` (ties go to the value
/// proposed first) and its frequency rank in the dataset. Rank 1 is the most
/// frequent value, equal frequencies share the smaller rank, and values
/// absent from the dataset get `distinct values + 1`. `None` when the
/// trajectory never sets the column.
pub fn trajectory_modal_rank(
    traj: &Trajectory,
    data: &Dataset,
    column: &str,
) -> Option<(String, usize)> {
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for v in traj
        .designs()
        .filter_map(|d| d.get(column).and_then(Value::as_cat))
    {
        match counts.iter_mut().find(|(k, _)| *k == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    let mut modal: Option<(&str, usize)> = None;
    for &(v, c) in &counts {
        if modal.is_none_or(|(_, mc)| c > mc) {
            modal = Some((v, c));
        }
    }
    let (value, _) = modal?;
    let freqs = value_frequencies(data, column);
    let rank = match freqs.iter().find(|(v, _)| v == value) {
        Some((_, c)) => 1 + freqs.iter().filter(|(_, other)| other > c).count(),
        None => freqs.len() + 1,
    };
    Some((value.to_string(), rank))
}
