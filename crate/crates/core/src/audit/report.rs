//! Per-task audit reports and the cross-task summary.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::audit::{
    alignment_ratio, best_match_rate, categorical_spreads, classify_divergence,
    literature_typical_value, oracle_reward_profile, published_best_row, trajectory_modal_rank,
    AuditError, AuditThresholds, Divergence, GroupingStat, MatchAt,
};
use crate::format::sig6;
use crate::runner::Trajectory;
use crate::space::{Design, Value};
use crate::task::{Condition, Direction, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMatch {
    pub condition: Condition,
    pub trajectories: usize,
    pub at_first: f64,
    /// Match rate at the last iteration of the shortest trajectory.
    pub at_last: f64,
    pub last_iteration: usize,
    /// Every proposal of every trajectory pooled.
    pub all_pooled: f64,
    /// Mean over optimizers of each optimizer's pooled rate.
    pub all_cell_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalRankTally {
    pub condition: Condition,
    pub rank: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub task: String,
    pub direction: Direction,
    /// 0-based row index into the dataset.
    pub published_best_row: usize,
    pub published_best_target: f64,
    pub published_best_design: Design,
    pub key_categorical: Option<String>,
    pub key_categorical_error: Option<String>,
    pub categorical_spreads: Vec<(String, f64)>,
    pub alignment_ratio: Option<f64>,
    pub feedback_actionable: bool,
    pub literature_typical: Option<String>,
    pub divergence: Option<Divergence>,
    pub reward_profile: Vec<(String, f64)>,
    pub match_rates: Vec<ConditionMatch>,
    pub modal_ranks: Vec<ModalRankTally>,
}

impl AuditReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Tasks with an identified key categorical.
    pub fn has_key(&self) -> bool {
        self.key_categorical.is_some()
    }

    pub fn divergent(&self) -> bool {
        self.divergence.as_ref().is_some_and(|d| d.divergent)
    }
}

/// Audits one task against its trajectories (any optimizer or condition).
pub fn audit_task(
    task: &TaskSpec,
    trajectories: &[Trajectory],
    thresholds: &AuditThresholds,
    grouping: GroupingStat,
) -> Result<AuditReport, AuditError> {
    let data = &task.dataset;
    let score = |d: &Design| task.score(d);
    let best = published_best_row(data)?;
    let alignment = match alignment_ratio(&score, data) {
        Ok(a) => Some(a),
        Err(AuditError::DegenerateScores) => None,
        Err(e) => return Err(e),
    };
    let spreads = match categorical_spreads(&score, data, &task.space) {
        Ok(s) => s,
        Err(AuditError::NoCategoricalColumns) => Vec::new(),
        Err(e) => return Err(e),
    };
    let key = match &task.key_column_override {
        Some(column) => {
            if task.space.param(column).is_none_or(|p| p.is_numeric()) {
                return Err(AuditError::NotCategorical(column.clone()));
            }
            Ok(column.clone())
        }
        None => crate::audit::key_categorical(&score, data, &task.space),
    };
    let mut report = AuditReport {
        task: task.name.clone(),
        direction: task.direction,
        published_best_row: best,
        published_best_target: data.rows[best].target,
        published_best_design: data.rows[best].design.clone(),
        key_categorical: key.as_ref().ok().cloned(),
        key_categorical_error: key.as_ref().err().map(|e| e.to_string()),
        categorical_spreads: spreads,
        alignment_ratio: alignment,
        feedback_actionable: alignment.is_some_and(|a| a >= thresholds.alignment_min),
        literature_typical: None,
        divergence: None,
        reward_profile: Vec::new(),
        match_rates: Vec::new(),
        modal_ranks: Vec::new(),
    };
    let Ok(column) = key else {
        return Ok(report);
    };
    report.literature_typical = Some(literature_typical_value(data, &column)?);
    report.reward_profile = oracle_reward_profile(&score, data, &task.space, &column)?;
    report.divergence = match classify_divergence(data, &column, thresholds, grouping) {
        Ok(d) => Some(d),
        Err(AuditError::SingleValueColumn(_)) => None,
        Err(e) => return Err(e),
    };
    let best_value = data.rows[best]
        .design
        .get(&column)
        .and_then(Value::as_cat)
        .map(str::to_string);

    let mut by_condition: BTreeMap<Condition, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories.iter().filter(|t| t.task == task.name) {
        by_condition.entry(t.condition).or_default().push(t);
    }
    for (condition, trajs) in by_condition {
        let owned: Vec<Trajectory> = trajs.iter().map(|t| (*t).clone()).collect();
        if let Some(best_value) = &best_value {
            let last = owned.iter().map(|t| t.steps.len()).min().unwrap_or(0);
            let mut per_optimizer: BTreeMap<&str, Vec<Trajectory>> = BTreeMap::new();
            for t in &owned {
                per_optimizer
                    .entry(t.optimizer.as_str())
                    .or_default()
                    .push(t.clone());
            }
            let cell_rates: Vec<f64> = per_optimizer
                .values()
                .map(|ts| best_match_rate(ts, &column, best_value, MatchAt::All))
                .collect();
            report.match_rates.push(ConditionMatch {
                condition,
                trajectories: owned.len(),
                at_first: best_match_rate(&owned, &column, best_value, MatchAt::Iter(1)),
                at_last: best_match_rate(&owned, &column, best_value, MatchAt::Iter(last)),
                last_iteration: last,
                all_pooled: best_match_rate(&owned, &column, best_value, MatchAt::All),
                all_cell_mean: cell_rates.iter().sum::<f64>() / cell_rates.len() as f64,
            });
        }
        let mut tallies: BTreeMap<usize, usize> = BTreeMap::new();
        for t in &owned {
            if let Some((_, rank)) = trajectory_modal_rank(t, data, &column) {
                *tallies.entry(rank).or_default() += 1;
            }
        }
        report
            .modal_ranks
            .extend(tallies.into_iter().map(|(rank, count)| ModalRankTally {
                condition,
                rank,
                count,
            }));
    }
    Ok(report)
}

/// Rows of the cross-task summary: four nested task subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub subset: &'static str,
    pub tasks: usize,
    /// Per condition: mean over tasks of (iteration-1, last-iteration,
    /// all-iteration pooled) match rates. `None` when no task in the subset
    /// has trajectories under the condition.
    pub rates: BTreeMap<Condition, Option<(f64, f64, f64)>>,
}

pub const SUMMARY_SUBSETS: [&str; 4] = [
    "all_audited",
    "key_categorical",
    "feedback_actionable",
    "literature_divergent",
];

pub fn summary_table(reports: &[AuditReport]) -> Vec<SummaryRow> {
    let keyed: Vec<&AuditReport> = reports.iter().filter(|r| r.has_key()).collect();
    let actionable: Vec<&AuditReport> = keyed
        .iter()
        .copied()
        .filter(|r| r.feedback_actionable)
        .collect();
    let divergent: Vec<&AuditReport> = actionable
        .iter()
        .copied()
        .filter(|r| r.divergent())
        .collect();
    let subsets: [Vec<&AuditReport>; 4] = [reports.iter().collect(), keyed, actionable, divergent];
    SUMMARY_SUBSETS
        .iter()
        .zip(subsets)
        .map(|(&subset, members)| {
            let mut rates = BTreeMap::new();
            for condition in [
                Condition::DomainAware,
                Condition::DomainAgnostic,
                Condition::None,
            ] {
                let found: Vec<&ConditionMatch> = members
                    .iter()
                    .filter_map(|r| r.match_rates.iter().find(|m| m.condition == condition))
                    .collect();
                let n = found.len() as f64;
                let entry = (!found.is_empty()).then(|| {
                    (
                        found.iter().map(|m| m.at_first).sum::<f64>() / n,
                        found.iter().map(|m| m.at_last).sum::<f64>() / n,
                        found.iter().map(|m| m.all_pooled).sum::<f64>() / n,
                    )
                });
                rates.insert(condition, entry);
            }
            SummaryRow {
                subset,
                tasks: members.len(),
                rates,
            }
        })
        .collect()
}

pub fn write_summary_table<W: Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let conditions = [
        Condition::DomainAware,
        Condition::DomainAgnostic,
        Condition::None,
    ];
    let mut header = vec!["subset".to_string(), "tasks".to_string()];
    for c in conditions {
        for part in ["iter1", "final", "all"] {
            header.push(format!("{c}_{part}"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.subset.to_string(), r.tasks.to_string()];
        for c in conditions {
            match r.rates.get(&c).copied().flatten() {
                Some((a, b, all)) => rec.extend([sig6(a), sig6(b), sig6(all)]),
                None => rec.extend(["".to_string(), "".to_string(), "".to_string()]),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
