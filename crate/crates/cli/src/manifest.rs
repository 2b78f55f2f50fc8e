//! Task manifests and task-corpus discovery.
//!
//! A task is a directory holding `task.toml`, the dataset table and the
//! serialized oracle. Relative paths in the manifest resolve against that
//! directory.

use std::path::{Path, PathBuf};

use bsfbench_core::metrics::{dataset_range, estimate_oracle_range};
use bsfbench_core::seed::derive_seed;
use bsfbench_core::task::OracleRange;
use bsfbench_core::{Dataset, Direction, OracleModel, ParameterSpace, TaskSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "task.toml";

/// Where fraction-of-optimum curves take the task optimum and worst from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumSource {
    /// Extremes of the oracle over a uniform sample of the space (cached).
    #[default]
    Oracle,
    /// Extremes of the measured targets.
    Dataset,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    /// Categorical column audited instead of the max-spread one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskManifest {
    pub name: String,
    /// `maximize` or `minimize`.
    pub objective: String,
    /// Target column of the dataset table.
    pub target: String,
    pub dataset: PathBuf,
    pub oracle: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_runs: Option<usize>,
    #[serde(default)]
    pub optimum_source: OptimumSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditSection>,
    /// Cached oracle optimum and worst.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<OracleRange>,
    pub space: ParameterSpace,
}

impl TaskManifest {
    pub fn direction(&self, path: &Path) -> Result<Direction, CliError> {
        self.objective
            .parse()
            .map_err(|e: String| CliError::manifest(path, "objective", e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifests always serialize")
    }
}

/// `dir/task.toml` for a directory, the path itself otherwise.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string())
}

/// Parses a manifest and checks its scalar fields. Referenced files are not
/// opened.
pub fn read_manifest(path: &Path) -> Result<TaskManifest, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::manifest(path, "<document>", format!("cannot read: {e}")))?;
    let manifest: TaskManifest = toml::from_str(&text).map_err(|e| {
        let message = e.message().to_string();
        CliError::manifest(path, &field_of(&message), message)
    })?;
    manifest.direction(path)?;
    bsfbench_core::runner::check_name(&manifest.name)
        .map_err(|e| CliError::manifest(path, "name", e.to_string()))?;
    if manifest.baseline_runs == Some(0) {
        return Err(CliError::manifest(
            path,
            "baseline_runs",
            "must be at least 1",
        ));
    }
    if let Some(column) = manifest.audit.as_ref().and_then(|a| a.key_column.as_ref()) {
        if manifest.space.param(column).is_none_or(|p| p.is_numeric()) {
            return Err(CliError::manifest(
                path,
                "audit.key_column",
                format!("`{column}` is not a categorical parameter"),
            ));
        }
    }
    if let Some(r) = manifest.cache {
        if !(r.optimum.is_finite() && r.worst.is_finite()) {
            return Err(CliError::manifest(
                path,
                "cache",
                "optimum and worst must be finite",
            ));
        }
    }
    Ok(manifest)
}

fn resolve(path: &Path, relative: &Path) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(relative)
}

/// Reads the dataset referenced by a manifest.
pub fn load_dataset(path: &Path, manifest: &TaskManifest) -> Result<Dataset, CliError> {
    let data_path = resolve(path, &manifest.dataset);
    if !data_path.is_file() {
        return Err(CliError::manifest(
            path,
            "dataset",
            format!("{} does not exist", data_path.display()),
        ));
    }
    Dataset::load_csv(
        &data_path,
        &manifest.space,
        &manifest.target,
        manifest.direction(path)?,
    )
    .map_err(|e| CliError::manifest(path, "dataset", e.to_string()))
}

pub fn oracle_path(path: &Path, manifest: &TaskManifest) -> PathBuf {
    resolve(path, &manifest.oracle)
}

/// Options for [`load_manifest`].
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub refresh_cache: bool,
    pub range_samples: usize,
    pub global_seed: u64,
}

/// Loads a full task: manifest, dataset and oracle. With `refresh_cache`
/// the oracle range is re-estimated and written back to the manifest.
pub fn load_manifest(path: &Path, options: LoadOptions) -> Result<TaskSpec, CliError> {
    let path = manifest_path(path);
    let mut manifest = read_manifest(&path)?;
    let dataset = load_dataset(&path, &manifest)?;
    let oracle_file = oracle_path(&path, &manifest);
    if !oracle_file.is_file() {
        return Err(CliError::manifest(
            &path,
            "oracle",
            format!("{} does not exist", oracle_file.display()),
        ));
    }
    let oracle = OracleModel::load(&oracle_file)
        .map_err(|e| CliError::manifest(&path, "oracle", e.to_string()))?;
    if oracle.target_name != manifest.target {
        return Err(CliError::manifest(
            &path,
            "oracle",
            format!(
                "oracle predicts `{}`, manifest target is `{}`",
                oracle.target_name, manifest.target
            ),
        ));
    }
    let mut task = TaskSpec {
        name: manifest.name.clone(),
        direction: manifest.direction(&path)?,
        space: manifest.space.clone(),
        dataset,
        oracle,
        baseline_runs_override: manifest.baseline_runs,
        oracle_range: manifest.cache,
        key_column_override: manifest.audit.as_ref().and_then(|a| a.key_column.clone()),
    };
    if options.refresh_cache {
        let seed = derive_seed(&[
            "oracle_range".into(),
            task.name.as_str().into(),
            options.global_seed.into(),
        ]);
        let fresh = estimate_oracle_range(&task, options.range_samples, seed);
        if let Some(old) = manifest.cache.filter(|old| *old != fresh) {
            log::warn!(
                "{}: cached range ({}, {}) replaced by ({}, {})",
                task.name,
                old.optimum,
                old.worst,
                fresh.optimum,
                fresh.worst
            );
        }
        manifest.cache = Some(fresh);
        task.oracle_range = Some(fresh);
        std::fs::write(&path, manifest.to_toml()).map_err(|e| CliError::io(&path, e))?;
    }
    if manifest.optimum_source == OptimumSource::Dataset {
        task.oracle_range = Some(dataset_range(&task.dataset));
    }
    Ok(task)
}

/// Manifest paths under `root`: `root` itself when it is a task directory
/// or a manifest file, else every immediate subdirectory holding a
/// manifest, in name order.
pub fn discover_tasks(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.join(MANIFEST_FILE)]);
    }
    if !root.is_dir() {
        return Err(CliError::data(
            "TaskCorpusMissing",
            format!("{} is not a directory", root.display()),
        ));
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| CliError::io(root, e))?
        .filter_map(Result::ok)
        .map(|e| e.path().join(MANIFEST_FILE))
        .filter(|p| p.is_file())
        .collect();
    out.sort();
    Ok(out)
}

/// Loads every task of a corpus, rejecting duplicate names.
pub fn load_corpus_tasks(root: &Path, options: LoadOptions) -> Result<Vec<TaskSpec>, CliError> {
    let mut tasks: Vec<TaskSpec> = Vec::new();
    for path in discover_tasks(root)? {
        let task = load_manifest(&path, options)?;
        if tasks.iter().any(|t| t.name == task.name) {
            return Err(CliError::manifest(
                &path,
                "name",
                format!("duplicate task name `{}`", task.name),
            ));
        }
        tasks.push(task);
    }
    tasks.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(tasks)
}

/// The task's cached or dataset range, or a fresh estimate when neither is
/// available.
pub fn task_range(task: &TaskSpec, options: LoadOptions) -> OracleRange {
    task.oracle_range.unwrap_or_else(|| {
        log::warn!(
            "{}: no cached oracle range, estimating (use --refresh-cache to store it)",
            task.name
        );
        let seed = derive_seed(&[
            "oracle_range".into(),
            task.name.as_str().into(),
            options.global_seed.into(),
        ]);
        estimate_oracle_range(task, options.range_samples, seed)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const VALID: &str = r#"
name = "demo"
objective = "maximize"
target = "y"
dataset = "data.csv"
oracle = "oracle.json"

[space]
name = "demo"

[[space.params]]
name = "x"
kind = "numeric"
lower = 0.0
upper = 1.0
"#;

    fn write(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn valid_manifest_parses_and_round_trips() {
        let (_dir, path) = write(VALID);
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.direction(&path).unwrap(), Direction::Maximize);
        let again: TaskManifest = toml::from_str(&m.to_toml()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn misspelled_objective_is_rejected() {
        let (_dir, path) = write(&VALID.replace("\"maximize\"", "\"maximise\""));
        match read_manifest(&path) {
            Err(CliError::ManifestInvalid { field, .. }) => assert_eq!(field, "objective"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_field_and_missing_dataset() {
        let (_dir, path) = write(&VALID.replace("target = \"y\"\n", ""));
        match read_manifest(&path) {
            Err(CliError::ManifestInvalid { field, .. }) => assert_eq!(field, "target"),
            other => panic!("{other:?}"),
        }
        let (_dir, path) = write(VALID);
        let options = LoadOptions {
            refresh_cache: false,
            range_samples: 10,
            global_seed: 0,
        };
        match load_manifest(&path, options) {
            Err(CliError::ManifestInvalid { field, .. }) => assert_eq!(field, "dataset"),
            other => panic!("{other:?}"),
        }
    }
}
