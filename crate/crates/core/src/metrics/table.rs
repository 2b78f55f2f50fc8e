//! The long-form metric table.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::format::sig6;
use crate::metrics::{
    bsf_auc_at, bsf_outcome_at, diversity, gp_normalize, nis, trajectory_curve, MetricConfig,
};
use crate::runner::Trajectory;
use crate::space::{Design, ParameterSpace};
use crate::task::{Condition, Direction};

pub const METRIC_TABLE_HEADER: [&str; 8] = [
    "task",
    "direction",
    "optimizer",
    "condition",
    "run",
    "metric",
    "horizon",
    "value",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricName {
    BsfAuc,
    BsfOutcome,
    GpNormBsfAuc,
    Nis,
    Diversity,
    FallbackSteps,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::BsfAuc,
        MetricName::BsfOutcome,
        MetricName::GpNormBsfAuc,
        MetricName::Nis,
        MetricName::Diversity,
        MetricName::FallbackSteps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::BsfAuc => "bsf_auc",
            MetricName::BsfOutcome => "bsf_outcome",
            MetricName::GpNormBsfAuc => "gp_norm_bsf_auc",
            MetricName::Nis => "nis",
            MetricName::Diversity => "diversity",
            MetricName::FallbackSteps => "fallback_steps",
        }
    }

    /// Whether larger values are better regardless of task direction.
    pub fn is_oriented(self) -> bool {
        !matches!(self, MetricName::BsfOutcome)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub task: String,
    pub direction: Direction,
    pub optimizer: String,
    pub condition: Condition,
    pub run: usize,
    pub metric: MetricName,
    pub horizon: usize,
    pub value: f64,
}

/// Extra inputs for metrics that need more than the trajectory itself.
#[derive(Debug, Clone, Default)]
pub struct TableContext {
    /// Spaces by task name; diversity rows are emitted only for known tasks.
    pub spaces: BTreeMap<String, ParameterSpace>,
}

/// Computes every metric row for a corpus. Trajectories keep their input
/// order; rows within a trajectory follow metric then horizon order.
///
/// GP-normalized bsf-AUC@k divides by the median bsf-AUC@k over the task's
/// runs of `config.baseline_optimizer`, and is omitted for tasks without
/// baseline runs.
pub fn compute_metric_table(
    trajectories: &[Trajectory],
    config: &MetricConfig,
    ctx: &TableContext,
) -> Vec<MetricRow> {
    let mut baseline: BTreeMap<(&str, usize), Vec<f64>> = BTreeMap::new();
    for t in trajectories
        .iter()
        .filter(|t| t.optimizer == config.baseline_optimizer)
    {
        let Ok(curve) = trajectory_curve(t) else {
            continue;
        };
        for &k in config
            .horizons
            .iter()
            .filter(|&&k| k >= 1 && k <= curve.len())
        {
            baseline
                .entry((t.task.as_str(), k))
                .or_default()
                .push(bsf_auc_at(&curve, k).expect("horizon checked"));
        }
    }
    let baseline: BTreeMap<(&str, usize), f64> = baseline
        .into_iter()
        .map(|(key, mut v)| (key, crate::stats::median(&mut v)))
        .collect();

    let mut rows = Vec::new();
    for t in trajectories {
        let Ok(curve) = trajectory_curve(t) else {
            log::warn!(
                "skipping empty trajectory {}/{}/{} run {}",
                t.task,
                t.optimizer,
                t.condition,
                t.run_index
            );
            continue;
        };
        let len = curve.len();
        let mut push = |metric, horizon, value| {
            rows.push(MetricRow {
                task: t.task.clone(),
                direction: t.direction,
                optimizer: t.optimizer.clone(),
                condition: t.condition,
                run: t.run_index,
                metric,
                horizon,
                value,
            })
        };
        let horizons: Vec<usize> = config
            .horizons
            .iter()
            .copied()
            .filter(|&k| k >= 1 && k <= len)
            .collect();
        for &k in &horizons {
            push(
                MetricName::BsfAuc,
                k,
                bsf_auc_at(&curve, k).expect("horizon checked"),
            );
        }
        for &k in &horizons {
            push(
                MetricName::BsfOutcome,
                k,
                bsf_outcome_at(&curve, k).expect("horizon checked"),
            );
        }
        for &k in &horizons {
            if let Some(&base) = baseline.get(&(t.task.as_str(), k)) {
                let auc = bsf_auc_at(&curve, k).expect("horizon checked");
                push(
                    MetricName::GpNormBsfAuc,
                    k,
                    gp_normalize(auc, base, config.epsilon),
                );
            }
        }
        push(MetricName::Nis, len, nis(&curve) as f64);
        if let Some(space) = ctx.spaces.get(&t.task) {
            let designs: Vec<Design> = t
                .steps
                .iter()
                .filter(|s| !s.fallback)
                .map(|s| s.design.clone())
                .collect();
            push(MetricName::Diversity, len, diversity(&designs, space));
        }
        push(
            MetricName::FallbackSteps,
            len,
            t.steps.iter().filter(|s| s.fallback).count() as f64,
        );
    }
    rows
}

/// Writes the table as comma-separated text with 6-significant-digit values.
pub fn write_metric_table<W: Write>(rows: &[MetricRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.task.as_str(),
            r.direction.as_str(),
            r.optimizer.as_str(),
            r.condition.as_str(),
            &r.run.to_string(),
            r.metric.as_str(),
            &r.horizon.to_string(),
            &sig6(r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metric_table<R: Read>(input: R) -> Result<Vec<MetricRow>, String> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(METRIC_TABLE_HEADER) {
        return Err(format!(
            "unexpected metric table header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let rec = record.map_err(|e| format!("line {line}: {e}"))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let err = |what: &str| format!("line {line}: invalid {what}");
        rows.push(MetricRow {
            task: field(0).to_string(),
            direction: field(1).parse().map_err(|_| err("direction"))?,
            optimizer: field(2).to_string(),
            condition: field(3).parse().map_err(|_| err("condition"))?,
            run: field(4).parse().map_err(|_| err("run"))?,
            metric: field(5).parse().map_err(|_| err("metric"))?,
            horizon: field(6).parse().map_err(|_| err("horizon"))?,
            value: field(7).parse().map_err(|_| err("value"))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::Step;

    fn traj(task: &str, optimizer: &str, run: usize, scores: &[f64]) -> Trajectory {
        Trajectory {
            task: task.into(),
            direction: Direction::Maximize,
            optimizer: optimizer.into(),
            condition: Condition::None,
            run_index: run,
            seed: 0,
            steps: scores
                .iter()
                .map(|&s| Step::scored(Design::new(), Design::new(), s))
                .collect(),
        }
    }

    #[test]
    fn rows_and_round_trip() {
        let config = MetricConfig {
            horizons: vec![1, 3],
            ..MetricConfig::default()
        };
        let trajs = vec![
            traj("t", "gp_ucb", 0, &[1.0, 2.0, 3.0]),
            traj("t", "gp_ucb", 1, &[1.0, 1.0, 1.0]),
            traj("t", "random", 0, &[0.5, 0.5, 4.0]),
        ];
        let rows = compute_metric_table(&trajs, &config, &TableContext::default());
        let get = |opt: &str, run: usize, m: MetricName, k: usize| {
            rows.iter()
                .find(|r| r.optimizer == opt && r.run == run && r.metric == m && r.horizon == k)
                .map(|r| r.value)
        };
        assert_eq!(get("gp_ucb", 0, MetricName::BsfAuc, 3), Some(2.0));
        // Baseline median at k=3 is (2 + 1) / 2 = 1.5.
        let norm = get("random", 0, MetricName::GpNormBsfAuc, 3).unwrap();
        assert!((norm - (5.0 / 3.0 - 1.5) / 1.5).abs() < 1e-12);
        assert_eq!(get("random", 0, MetricName::Nis, 3), Some(1.0));

        let mut buf = Vec::new();
        write_metric_table(&rows, &mut buf).unwrap();
        let back = read_metric_table(buf.as_slice()).unwrap();
        assert_eq!(back.len(), rows.len());
        assert_eq!(back[0].metric, MetricName::BsfAuc);
    }

    #[test]
    fn empty_table_has_header_only() {
        let mut buf = Vec::new();
        write_metric_table(&[], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "task,direction,optimizer,condition,run,metric,horizon,value\n"
        );
    }
}
