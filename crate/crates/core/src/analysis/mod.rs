//! Leaderboard analyses over per-cell medians.
//!
//! A cell is one (task, optimizer, condition) combination; its summary holds
//! the median over runs of every metric. Competitors within a task are
//! identified by [`CellSummary::label`]. Comparisons are direction-aware:
//! bsf-Outcome medians are oriented before ranking, every other metric is
//! already oriented.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{best_so_far, iter_to_fraction, MetricName, MetricRow};
use crate::runner::Trajectory;
use crate::stats::median;
use crate::task::{Condition, Direction};

/// Relative tolerance of the tie rule.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no baseline cell for task `{0}`")]
    MissingBaseline(String),
    #[error("need at least 2 units to leave one out, got {0}")]
    TooFewUnits(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub task: String,
    pub direction: Direction,
    pub optimizer: String,
    pub condition: Condition,
    pub runs: usize,
    pub medians: BTreeMap<(MetricName, usize), f64>,
}

impl CellSummary {
    /// `optimizer` for baseline cells, `optimizer@condition` otherwise.
    pub fn label(&self) -> String {
        match self.condition {
            Condition::None => self.optimizer.clone(),
            c => format!("{}@{c}", self.optimizer),
        }
    }

    pub fn value(&self, metric: MetricName, k: usize) -> Option<f64> {
        self.medians.get(&(metric, k)).copied()
    }

    /// Median oriented so that larger is better.
    pub fn oriented(&self, metric: MetricName, k: usize) -> Option<f64> {
        let v = self.value(metric, k)?;
        Some(if metric.is_oriented() {
            v
        } else {
            self.direction.orient(v)
        })
    }
}

/// Groups metric rows by cell and takes medians over runs. Output is sorted
/// by (task, optimizer, condition).
pub fn summarize_cells(rows: &[MetricRow]) -> Vec<CellSummary> {
    type Key = (String, String, Condition);
    type Acc = (
        Direction,
        BTreeSet<usize>,
        BTreeMap<(MetricName, usize), Vec<f64>>,
    );
    let mut values: BTreeMap<Key, Acc> = BTreeMap::new();
    for r in rows {
        let entry = values
            .entry((r.task.clone(), r.optimizer.clone(), r.condition))
            .or_insert_with(|| (r.direction, BTreeSet::new(), BTreeMap::new()));
        entry.1.insert(r.run);
        entry
            .2
            .entry((r.metric, r.horizon))
            .or_default()
            .push(r.value);
    }
    values
        .into_iter()
        .map(
            |((task, optimizer, condition), (direction, runs, metrics))| CellSummary {
                task,
                direction,
                optimizer,
                condition,
                runs: runs.len(),
                medians: metrics
                    .into_iter()
                    .map(|(key, mut v)| (key, median(&mut v)))
                    .collect(),
            },
        )
        .collect()
}

fn by_task(cells: &[CellSummary]) -> BTreeMap<&str, Vec<&CellSummary>> {
    let mut out: BTreeMap<&str, Vec<&CellSummary>> = BTreeMap::new();
    for c in cells {
        out.entry(c.task.as_str()).or_default().push(c);
    }
    out
}

fn within(v: f64, max: f64, tol: f64) -> bool {
    max - v <= tol * max.abs()
}

/// Winner and tie set of one task's cells under an oriented metric. The
/// winner is the first label (in label order) attaining the maximum; the
/// tie set holds every label within relative tolerance `tol` of it. `None`
/// when no cell has the metric.
pub fn best_model_tie_set(
    cells: &[&CellSummary],
    metric: MetricName,
    k: usize,
    tol: f64,
) -> Option<(String, Vec<String>)> {
    let mut scored: Vec<(String, f64)> = cells
        .iter()
        .filter_map(|c| c.oriented(metric, k).map(|v| (c.label(), v)))
        .collect();
    scored.sort_by(|a, b| a.0.cmp(&b.0));
    let max = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let winner = scored.iter().find(|s| s.1 == max)?.0.clone();
    let ties = scored
        .iter()
        .filter(|s| within(s.1, max, tol))
        .map(|s| s.0.clone())
        .collect();
    Some((winner, ties))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisagreementRecord {
    pub task: String,
    pub winner_auc: String,
    pub auc_tie_set: Vec<String>,
    pub winner_outcome: String,
    pub outcome_tie_set: Vec<String>,
    /// The bsf-AUC winner is in the bsf-Outcome tie set.
    pub agree: bool,
    /// The two tie sets intersect (non-canonical variant).
    pub permissive_agree: bool,
    /// Competition rank of the bsf-AUC winner under bsf-Outcome.
    pub rank_of_auc_winner_under_outcome: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[i][j]`: tasks won by `labels[i]` under bsf-AUC and by
    /// `labels[j]` under bsf-Outcome.
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disagreement {
    pub k: usize,
    pub tasks: usize,
    pub disagreeing: usize,
    pub rate: f64,
    pub permissive_rate: f64,
    pub records: Vec<DisagreementRecord>,
    pub confusion: ConfusionMatrix,
}

/// Tie-aware disagreement between bsf-AUC@k and bsf-Outcome@k winners.
/// Tasks with fewer than two competitors carrying both metrics are skipped.
pub fn metric_disagreement(cells: &[CellSummary], k: usize, tol: f64) -> Disagreement {
    let mut records = Vec::new();
    let mut labels = BTreeSet::new();
    for (task, task_cells) in by_task(cells) {
        let usable: Vec<&CellSummary> = task_cells
            .into_iter()
            .filter(|c| {
                c.value(MetricName::BsfAuc, k).is_some()
                    && c.value(MetricName::BsfOutcome, k).is_some()
            })
            .collect();
        if usable.len() < 2 {
            continue;
        }
        let (Some((winner_auc, auc_ties)), Some((winner_outcome, outcome_ties))) = (
            best_model_tie_set(&usable, MetricName::BsfAuc, k, tol),
            best_model_tie_set(&usable, MetricName::BsfOutcome, k, tol),
        ) else {
            continue;
        };
        let auc_winner_outcome = usable
            .iter()
            .find(|c| c.label() == winner_auc)
            .and_then(|c| c.oriented(MetricName::BsfOutcome, k))
            .expect("winner has both metrics");
        let rank = 1 + usable
            .iter()
            .filter_map(|c| c.oriented(MetricName::BsfOutcome, k))
            .filter(|&v| v > auc_winner_outcome && !within(auc_winner_outcome, v, tol))
            .count();
        labels.extend(usable.iter().map(|c| c.label()));
        records.push(DisagreementRecord {
            task: task.to_string(),
            agree: outcome_ties.contains(&winner_auc),
            permissive_agree: auc_ties.iter().any(|l| outcome_ties.contains(l)),
            winner_auc,
            auc_tie_set: auc_ties,
            winner_outcome,
            outcome_tie_set: outcome_ties,
            rank_of_auc_winner_under_outcome: rank,
        });
    }
    let labels: Vec<String> = labels.into_iter().collect();
    let index = |l: &str| labels.iter().position(|x| x == l).expect("label collected");
    let mut counts = vec![vec![0; labels.len()]; labels.len()];
    for r in &records {
        counts[index(&r.winner_auc)][index(&r.winner_outcome)] += 1;
    }
    let tasks = records.len();
    let disagreeing = records.iter().filter(|r| !r.agree).count();
    let permissive = records.iter().filter(|r| !r.permissive_agree).count();
    let frac = |n: usize| {
        if tasks == 0 {
            0.0
        } else {
            n as f64 / tasks as f64
        }
    };
    Disagreement {
        k,
        tasks,
        disagreeing,
        rate: frac(disagreeing),
        permissive_rate: frac(permissive),
        records,
        confusion: ConfusionMatrix { labels, counts },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassRate {
    pub rate: f64,
    /// (task, optimizer median strictly better than the baseline's).
    pub wins: Vec<(String, bool)>,
}

/// Fraction of tasks where the cell's oriented median strictly beats the
/// baseline cell's. `cells` and `baseline` hold at most one cell per task.
pub fn pass_rate_vs_baseline(
    cells: &[CellSummary],
    baseline: &[CellSummary],
    metric: MetricName,
    k: usize,
) -> Result<PassRate, AnalysisError> {
    let mut wins = Vec::new();
    for c in cells {
        let Some(v) = c.oriented(metric, k) else {
            continue;
        };
        let b = baseline
            .iter()
            .find(|b| b.task == c.task)
            .and_then(|b| b.oriented(metric, k))
            .ok_or_else(|| AnalysisError::MissingBaseline(c.task.clone()))?;
        wins.push((c.task.clone(), v > b));
    }
    let rate = if wins.is_empty() {
        0.0
    } else {
        wins.iter().filter(|w| w.1).count() as f64 / wins.len() as f64
    };
    Ok(PassRate { rate, wins })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionPair {
    pub task: String,
    pub optimizer: String,
    pub aware: f64,
    pub agnostic: f64,
    pub win: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinRate {
    pub rate: f64,
    pub pairs: Vec<ConditionPair>,
    /// (task, optimizer) combinations with only one condition present.
    pub excluded: usize,
}

/// Fraction of (task, optimizer) pairs where the domain-aware median
/// bsf-AUC@k strictly exceeds the domain-agnostic one.
pub fn paired_condition_win_rate(cells: &[CellSummary], k: usize) -> WinRate {
    type AwareAgnostic = (Option<f64>, Option<f64>);
    let mut grouped: BTreeMap<(&str, &str), AwareAgnostic> = BTreeMap::new();
    for c in cells {
        let slot = grouped
            .entry((c.task.as_str(), c.optimizer.as_str()))
            .or_default();
        match c.condition {
            Condition::DomainAware => slot.0 = c.oriented(MetricName::BsfAuc, k),
            Condition::DomainAgnostic => slot.1 = c.oriented(MetricName::BsfAuc, k),
            Condition::None => {}
        }
    }
    let mut pairs = Vec::new();
    let mut excluded = 0;
    for ((task, optimizer), slot) in grouped {
        match slot {
            (Some(aware), Some(agnostic)) => pairs.push(ConditionPair {
                task: task.into(),
                optimizer: optimizer.into(),
                aware,
                agnostic,
                win: aware > agnostic,
            }),
            (None, None) => {}
            _ => excluded += 1,
        }
    }
    let rate = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().filter(|p| p.win).count() as f64 / pairs.len() as f64
    };
    WinRate {
        rate,
        pairs,
        excluded,
    }
}

/// Pointwise median best-so-far curves of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskCurves {
    pub direction: Direction,
    /// Worst value of the task, needed for minimize tasks.
    pub worst: Option<f64>,
    pub curves: BTreeMap<String, Vec<f64>>,
}

/// Median best-so-far curve per (task, cell label), truncated to the
/// shortest run of the cell.
pub fn median_curves(trajectories: &[Trajectory]) -> BTreeMap<String, TaskCurves> {
    type Runs = (Direction, Vec<Vec<f64>>);
    let mut grouped: BTreeMap<(String, String), Runs> = BTreeMap::new();
    for t in trajectories {
        let Ok(curve) = best_so_far(&t.scores(), t.direction) else {
            continue;
        };
        let label = match t.condition {
            Condition::None => t.optimizer.clone(),
            c => format!("{}@{c}", t.optimizer),
        };
        grouped
            .entry((t.task.clone(), label))
            .or_insert_with(|| (t.direction, Vec::new()))
            .1
            .push(curve.values);
    }
    let mut out: BTreeMap<String, TaskCurves> = BTreeMap::new();
    for ((task, label), (direction, runs)) in grouped {
        let len = runs.iter().map(Vec::len).min().unwrap_or(0);
        let curve = (0..len)
            .map(|i| median(&mut runs.iter().map(|r| r[i]).collect::<Vec<_>>()))
            .collect();
        out.entry(task)
            .or_insert_with(|| TaskCurves {
                direction,
                worst: None,
                curves: BTreeMap::new(),
            })
            .curves
            .insert(label, curve);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub task: String,
    pub auc_winner: String,
    pub outcome_winner: String,
    pub auc_winner_endpoint: f64,
    pub outcome_winner_endpoint: f64,
    pub shared_optimum: f64,
    pub auc_winner_iter: Option<usize>,
    pub outcome_winner_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergentGapTable {
    pub rows: Vec<GapRow>,
    pub median_auc_winner_iter: Option<f64>,
    pub median_outcome_winner_iter: Option<f64>,
}

/// For disagreeing tasks whose two winners end within relative `tolerance`
/// of each other, the first iteration at which each winner's median curve
/// reaches `fraction` of the better endpoint.
pub fn convergent_gap_table(
    disagreement: &Disagreement,
    curves: &BTreeMap<String, TaskCurves>,
    k: usize,
    tolerance: f64,
    fraction: f64,
) -> ConvergentGapTable {
    let mut rows = Vec::new();
    for r in disagreement.records.iter().filter(|r| !r.agree) {
        let Some(tc) = curves.get(&r.task) else {
            continue;
        };
        let (Some(a), Some(b)) = (
            tc.curves.get(&r.winner_auc),
            tc.curves.get(&r.winner_outcome),
        ) else {
            continue;
        };
        if a.len() < k || b.len() < k || k == 0 {
            continue;
        }
        let (ea, eb) = (a[k - 1], b[k - 1]);
        let scale = ea.abs().max(eb.abs());
        if scale > 0.0 && (ea - eb).abs() / scale > tolerance {
            continue;
        }
        let optimum = if tc.direction.improves(ea, eb) {
            ea
        } else {
            eb
        };
        let worst = match tc.direction {
            Direction::Maximize => None,
            Direction::Minimize => tc.worst,
        };
        let iter = |c: &[f64]| {
            let curve = crate::metrics::BsfCurve {
                values: c[..k].to_vec(),
                direction: tc.direction,
            };
            iter_to_fraction(&curve, optimum, fraction, worst)
                .ok()
                .flatten()
        };
        rows.push(GapRow {
            task: r.task.clone(),
            auc_winner: r.winner_auc.clone(),
            outcome_winner: r.winner_outcome.clone(),
            auc_winner_endpoint: ea,
            outcome_winner_endpoint: eb,
            shared_optimum: optimum,
            auc_winner_iter: iter(a),
            outcome_winner_iter: iter(b),
        });
    }
    let med = |f: fn(&GapRow) -> Option<usize>| {
        let mut v: Vec<f64> = rows.iter().filter_map(f).map(|i| i as f64).collect();
        (!v.is_empty()).then(|| median(&mut v))
    };
    ConvergentGapTable {
        median_auc_winner_iter: med(|r| r.auc_winner_iter),
        median_outcome_winner_iter: med(|r| r.outcome_winner_iter),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaveOutUnit {
    Optimizer,
    Task,
}

/// Recomputes `rate_fn` once per excluded optimizer or task, in sorted
/// unit order.
pub fn leave_one_out_rate<F>(
    cells: &[CellSummary],
    unit: LeaveOutUnit,
    rate_fn: F,
) -> Result<Vec<(String, f64)>, AnalysisError>
where
    F: Fn(&[CellSummary]) -> f64,
{
    let key = |c: &CellSummary| match unit {
        LeaveOutUnit::Optimizer => c.optimizer.clone(),
        LeaveOutUnit::Task => c.task.clone(),
    };
    let units: BTreeSet<String> = cells.iter().map(key).collect();
    if units.len() < 2 {
        return Err(AnalysisError::TooFewUnits(units.len()));
    }
    Ok(units
        .into_iter()
        .map(|u| {
            let kept: Vec<CellSummary> = cells.iter().filter(|c| key(c) != u).cloned().collect();
            let rate = rate_fn(&kept);
            (u, rate)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn cell(task: &str, optimizer: &str, auc: f64, outcome: f64) -> CellSummary {
        CellSummary {
            task: task.into(),
            direction: Direction::Maximize,
            optimizer: optimizer.into(),
            condition: Condition::None,
            runs: 4,
            medians: [
                ((MetricName::BsfAuc, 30), auc),
                ((MetricName::BsfOutcome, 30), outcome),
            ]
            .into_iter()
            .collect(),
        }
    }

    #[test]
    fn tie_sets() {
        let cells = [cell("t", "a", 2.0, 0.0), cell("t", "b", 1.0, 0.0)];
        let refs: Vec<&CellSummary> = cells.iter().collect();
        assert_eq!(
            best_model_tie_set(&refs, MetricName::BsfAuc, 30, 1e-9),
            Some(("a".into(), vec!["a".into()]))
        );
        assert_eq!(
            best_model_tie_set(&refs, MetricName::BsfOutcome, 30, 1e-9),
            Some(("a".into(), vec!["a".into(), "b".into()]))
        );
        let near = [cell("t", "a", 1.0, 0.0), cell("t", "b", 1.0 - 1e-12, 0.0)];
        let refs: Vec<&CellSummary> = near.iter().collect();
        assert_eq!(
            best_model_tie_set(&refs, MetricName::BsfAuc, 30, 1e-9)
                .unwrap()
                .1
                .len(),
            2
        );
    }

    #[test]
    fn disagreement_rate_and_confusion() {
        let cells = vec![
            cell("t1", "fast", 3.0, 10.0),
            cell("t1", "slow", 2.0, 10.0),
            cell("t2", "fast", 3.0, 9.0),
            cell("t2", "slow", 2.0, 10.0),
        ];
        let d = metric_disagreement(&cells, 30, DEFAULT_TIE_TOLERANCE);
        assert_eq!(d.rate, 0.5);
        assert_eq!(d.confusion.labels, vec!["fast", "slow"]);
        assert_eq!(d.confusion.counts, vec![vec![1, 1], vec![0, 0]]);
        assert_eq!(d.records[1].rank_of_auc_winner_under_outcome, 2);
        let total: usize = d.confusion.counts.iter().flatten().sum();
        assert_eq!(total, d.tasks);
    }

    #[test]
    fn pass_and_win_rates() {
        let base: Vec<CellSummary> = (0..20)
            .map(|i| cell(&format!("t{i}"), "gp", 1.0, 1.0))
            .collect();
        let same = pass_rate_vs_baseline(&base, &base, MetricName::BsfAuc, 30).unwrap();
        assert_eq!(same.rate, 0.0);
        let mix: Vec<CellSummary> = (0..20)
            .map(|i| cell(&format!("t{i}"), "x", if i < 9 { 2.0 } else { 0.5 }, 1.0))
            .collect();
        assert_eq!(
            pass_rate_vs_baseline(&mix, &base, MetricName::BsfAuc, 30)
                .unwrap()
                .rate,
            0.45
        );
        assert_eq!(
            pass_rate_vs_baseline(&mix, &base[..3], MetricName::BsfAuc, 30),
            Err(AnalysisError::MissingBaseline("t3".into()))
        );

        let mut cells = Vec::new();
        for i in 0..8 {
            let mut a = cell(&format!("t{i}"), "m", if i < 5 { 2.0 } else { 1.0 }, 0.0);
            a.condition = Condition::DomainAware;
            let mut b = cell(&format!("t{i}"), "m", 1.0, 0.0);
            b.condition = Condition::DomainAgnostic;
            cells.push(a);
            cells.push(b);
        }
        let mut lone = cell("t9", "m", 1.0, 0.0);
        lone.condition = Condition::DomainAware;
        cells.push(lone);
        let w = paired_condition_win_rate(&cells, 30);
        assert_eq!((w.rate, w.pairs.len(), w.excluded), (0.625, 8, 1));
    }

    #[test]
    fn convergent_gaps() {
        let step = |at: usize| -> Vec<f64> {
            (1..=30)
                .map(|i| if i >= at { 210.4 } else { 100.0 })
                .collect()
        };
        let mut cells = vec![
            cell("t", "riser7", 0.0, 210.4),
            cell("t", "riser15", 0.0, 210.4),
        ];
        // Make the late riser win the outcome strictly by a hair and the early one win AUC.
        cells[0].medians.insert((MetricName::BsfAuc, 30), 200.0);
        cells[1].medians.insert((MetricName::BsfAuc, 30), 180.0);
        cells[1].medians.insert((MetricName::BsfOutcome, 30), 210.5);
        let d = metric_disagreement(&cells, 30, DEFAULT_TIE_TOLERANCE);
        assert_eq!(d.rate, 1.0);
        let mut tc = TaskCurves {
            direction: Direction::Maximize,
            worst: None,
            curves: BTreeMap::new(),
        };
        tc.curves.insert("riser7".into(), step(7));
        tc.curves.insert("riser15".into(), step(15));
        let curves: BTreeMap<String, TaskCurves> = [("t".to_string(), tc)].into_iter().collect();
        let table = convergent_gap_table(&d, &curves, 30, 0.01, 0.99);
        assert_eq!(table.rows.len(), 1);
        assert_eq!(
            (
                table.rows[0].auc_winner_iter,
                table.rows[0].outcome_winner_iter
            ),
            (Some(7), Some(15))
        );

        let mut far = curves.clone();
        far.get_mut("t").unwrap().curves.insert(
            "riser15".into(),
            step(15).iter().map(|v| v * 1.05).collect(),
        );
        assert!(convergent_gap_table(&d, &far, 30, 0.01, 0.99)
            .rows
            .is_empty());
    }

    #[test]
    fn leave_one_out() {
        let cells = vec![
            cell("t1", "a", 1.0, 1.0),
            cell("t1", "b", 2.0, 2.0),
            cell("t2", "a", 1.0, 1.0),
        ];
        let out = leave_one_out_rate(&cells, LeaveOutUnit::Optimizer, |c| c.len() as f64).unwrap();
        assert_eq!(out, vec![("a".to_string(), 1.0), ("b".to_string(), 2.0)]);
        assert!(leave_one_out_rate(&cells[..1], LeaveOutUnit::Task, |_| 0.0).is_err());
    }
}
