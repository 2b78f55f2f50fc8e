//! Line-delimited trajectory store.
//!
//! A store is a directory holding one file per (task, optimizer, condition)
//! cell, named `<task>__<optimizer>__<condition>.jsonl`. Each line is one
//! trajectory record:
//!
//! ```text
//! {"task":..,"direction":..,"optimizer":..,"condition":..,"run_index":..,"seed":..,
//!  "steps":[{"raw":{..},"design":{..},"score":..,"fallback":..,"retries_used":..}, ..]}
//! ```
//!
//! Records are appended in run-index order; each append is a single write.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::runner::{RunnerError, Trajectory};
use crate::task::Condition;

pub const STORE_EXTENSION: &str = "jsonl";

#[derive(Debug, Clone)]
pub struct TrajectoryStore {
    root: PathBuf,
}

/// Selects trajectories by cell identity; `None` matches anything.
#[derive(Debug, Clone, Default)]
pub struct CorpusFilter {
    pub task: Option<String>,
    pub optimizer: Option<String>,
    pub condition: Option<Condition>,
}

impl CorpusFilter {
    fn matches(&self, t: &Trajectory) -> bool {
        self.task.as_ref().is_none_or(|x| *x == t.task)
            && self.optimizer.as_ref().is_none_or(|x| *x == t.optimizer)
            && self.condition.is_none_or(|c| c == t.condition)
    }
}

/// Names used in file names must be non-empty and limited to
/// `[A-Za-z0-9_.-]` without a double underscore.
pub fn check_name(name: &str) -> Result<(), RunnerError> {
    let ok = !name.is_empty()
        && !name.contains("__")
        && !name.starts_with('.')
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(RunnerError::InvalidName(name.to_string()))
    }
}

impl TrajectoryStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cell_path(&self, task: &str, optimizer: &str, condition: Condition) -> PathBuf {
        self.root.join(format!(
            "{task}__{optimizer}__{condition}.{STORE_EXTENSION}"
        ))
    }

    /// Run indices already stored for a cell, in file order. A truncated or
    /// corrupt trailing record makes the cell unreadable rather than silently
    /// shorter.
    pub fn stored_runs(
        &self,
        task: &str,
        optimizer: &str,
        condition: Condition,
    ) -> Result<Vec<usize>, RunnerError> {
        let path = self.cell_path(task, optimizer, condition);
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_file(&path, false)?
            .into_iter()
            .map(|t| t.run_index)
            .collect())
    }

    /// Appends records to their cell file, one write per record.
    pub fn append(&self, trajectories: &[Trajectory]) -> Result<(), RunnerError> {
        fs::create_dir_all(&self.root)
            .map_err(|e| RunnerError::Io(format!("{}: {e}", self.root.display())))?;
        for t in trajectories {
            let path = self.cell_path(&t.task, &t.optimizer, t.condition);
            let mut line = serde_json::to_string(t).map_err(|e| RunnerError::Io(e.to_string()))?;
            line.push('\n');
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| RunnerError::Io(format!("{}: {e}", path.display())))?;
            file.write_all(line.as_bytes())
                .map_err(|e| RunnerError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    /// Loads matching trajectories ordered by (task, optimizer, condition,
    /// run index). A missing store directory is an empty corpus.
    pub fn load(
        &self,
        filter: &CorpusFilter,
        lenient: bool,
    ) -> Result<Vec<Trajectory>, RunnerError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&self.root)
            .map_err(|e| RunnerError::Io(format!("{}: {e}", self.root.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == STORE_EXTENSION))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for path in files {
            out.extend(
                read_file(&path, lenient)?
                    .into_iter()
                    .filter(|t| filter.matches(t)),
            );
        }
        out.sort_by(|a, b| {
            (&a.task, &a.optimizer, a.condition.as_str(), a.run_index).cmp(&(
                &b.task,
                &b.optimizer,
                b.condition.as_str(),
                b.run_index,
            ))
        });
        Ok(out)
    }
}

fn read_file(path: &Path, lenient: bool) -> Result<Vec<Trajectory>, RunnerError> {
    let file =
        fs::File::open(path).map_err(|e| RunnerError::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RunnerError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Trajectory>(&line)
            .map_err(|e| e.to_string())
            .and_then(|t| t.check().map(|_| t));
        match parsed {
            Ok(t) => out.push(t),
            Err(message) => {
                let err = RunnerError::CorruptRecord {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message,
                };
                if lenient {
                    log::warn!("{err}; skipped");
                } else {
                    return Err(err);
                }
            }
        }
    }
    Ok(out)
}

/// Loads a corpus with [`TrajectoryStore::load`].
pub fn load_corpus(
    store: &Path,
    filter: &CorpusFilter,
    lenient: bool,
) -> Result<Vec<Trajectory>, RunnerError> {
    TrajectoryStore::new(store).load(filter, lenient)
}
