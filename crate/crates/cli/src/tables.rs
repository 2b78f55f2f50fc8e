//! Report tables. Every float goes through `sig6` and every table is sorted,
//! so files are byte-stable for identical inputs.

use std::path::Path;

use bsfbench_core::analysis::{ConvergentGapTable, Disagreement};
use bsfbench_core::format::sig6;

use crate::error::CliError;

pub fn opt(x: Option<f64>) -> String {
    x.map(sig6).unwrap_or_default()
}

pub fn opt_usize(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes a header and rows as CSV, creating parent directories.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::data("Io", format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| CliError::data("Io", format!("{}: {e}", path.display()));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

pub fn disagreement_rows(
    d: &Disagreement,
    permissive: bool,
) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let mut header = vec![
        "task",
        "winner_auc",
        "auc_tie_set",
        "winner_outcome",
        "outcome_tie_set",
        "agree",
        "rank_of_auc_winner_under_outcome",
    ];
    if permissive {
        header.push("permissive_agree_noncanonical");
    }
    let rows = d
        .records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.task.clone(),
                r.winner_auc.clone(),
                r.auc_tie_set.join(";"),
                r.winner_outcome.clone(),
                r.outcome_tie_set.join(";"),
                r.agree.to_string(),
                r.rank_of_auc_winner_under_outcome.to_string(),
            ];
            if permissive {
                row.push(r.permissive_agree.to_string());
            }
            row
        })
        .collect();
    (header, rows)
}

/// Square grid: one row per bsf-AUC winner, one column per bsf-Outcome
/// winner.
pub fn confusion_rows(d: &Disagreement) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["auc_winner\\outcome_winner".to_string()];
    header.extend(d.confusion.labels.iter().cloned());
    let rows = d
        .confusion
        .labels
        .iter()
        .zip(&d.confusion.counts)
        .map(|(label, counts)| {
            let mut row = vec![label.clone()];
            row.extend(counts.iter().map(|c| c.to_string()));
            row
        })
        .collect();
    (header, rows)
}

pub const GAP_HEADER: [&str; 8] = [
    "task",
    "auc_winner",
    "outcome_winner",
    "auc_winner_endpoint",
    "outcome_winner_endpoint",
    "shared_optimum",
    "auc_winner_iter",
    "outcome_winner_iter",
];

pub fn gap_rows(t: &ConvergentGapTable) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| {
            vec![
                r.task.clone(),
                r.auc_winner.clone(),
                r.outcome_winner.clone(),
                sig6(r.auc_winner_endpoint),
                sig6(r.outcome_winner_endpoint),
                sig6(r.shared_optimum),
                opt_usize(r.auc_winner_iter),
                opt_usize(r.outcome_winner_iter),
            ]
        })
        .collect()
}
