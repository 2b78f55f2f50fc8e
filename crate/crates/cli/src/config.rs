//! Global settings: a TOML file overridden by command-line flags.

use std::path::Path;

use bsfbench_core::audit::{AuditThresholds, GroupingStat};
use bsfbench_core::metrics::MetricConfig;
use bsfbench_core::GpUcbConfig;
use clap::Args;
use serde::Deserialize;

use crate::error::CliError;

/// Contents of the optional config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub global_seed: Option<u64>,
    pub workers: Option<usize>,
    pub iters: Option<usize>,
    pub runs_per_cell: Option<usize>,
    pub baseline_runs: Option<usize>,
    pub horizons: Option<Vec<usize>>,
    pub epsilon: Option<f64>,
    pub optimum_fraction: Option<f64>,
    pub convergence_tolerance: Option<f64>,
    pub tie_tolerance: Option<f64>,
    pub range_samples: Option<usize>,
    pub bootstrap_replicates: Option<usize>,
    pub alignment_min: Option<f64>,
    pub range_gap_min: Option<f64>,
    pub sigma_gap_min: Option<f64>,
    pub grouping: Option<GroupingStat>,
    pub gp: Option<GpUcbConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(path, format!("cannot read: {e}")))?;
        toml::from_str(&text).map_err(|e| CliError::config(path, e.message().to_string()))
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Config file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub runs_per_cell: Option<usize>,
    #[arg(long, global = true)]
    pub baseline_runs: Option<usize>,
    /// Comma-separated metric horizons.
    #[arg(long, global = true, value_delimiter = ',')]
    pub horizons: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub optimum_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub convergence_tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub tie_tolerance: Option<f64>,
    /// Uniform samples used to estimate a task's oracle range.
    #[arg(long, global = true)]
    pub range_samples: Option<usize>,
    #[arg(long, global = true)]
    pub bootstrap_replicates: Option<usize>,
    #[arg(long, global = true)]
    pub alignment_min: Option<f64>,
    #[arg(long, global = true)]
    pub range_gap_min: Option<f64>,
    #[arg(long, global = true)]
    pub sigma_gap_min: Option<f64>,
    /// Per-value statistic of the runner-up divergence criterion.
    #[arg(long, global = true, value_parser = parse_grouping)]
    pub grouping: Option<GroupingStat>,
    /// Recompute cached oracle ranges and write them back to the manifests.
    #[arg(long, global = true)]
    pub refresh_cache: bool,
}

fn parse_grouping(s: &str) -> Result<GroupingStat, String> {
    match s {
        "best" => Ok(GroupingStat::Best),
        "mean" => Ok(GroupingStat::Mean),
        other => Err(format!("expected `best` or `mean`, got `{other}`")),
    }
}

/// Resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub global_seed: u64,
    pub workers: usize,
    pub iters: usize,
    pub runs_per_cell: usize,
    pub baseline_runs: usize,
    pub metrics: MetricConfig,
    pub tie_tolerance: f64,
    pub range_samples: usize,
    pub bootstrap_replicates: usize,
    pub thresholds: AuditThresholds,
    pub grouping: GroupingStat,
    pub gp: GpUcbConfig,
    pub refresh_cache: bool,
}

impl Settings {
    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let metric_defaults = MetricConfig::default();
        let threshold_defaults = AuditThresholds::default();
        let pick =
            |flag: Option<f64>, file: Option<f64>, default: f64| flag.or(file).unwrap_or(default);
        let settings = Settings {
            global_seed: flags.seed.or(file.global_seed).unwrap_or(0),
            workers: flags.workers.or(file.workers).unwrap_or(1),
            iters: flags.iters.or(file.iters).unwrap_or(30),
            runs_per_cell: flags.runs_per_cell.or(file.runs_per_cell).unwrap_or(4),
            baseline_runs: flags.baseline_runs.or(file.baseline_runs).unwrap_or(200),
            metrics: MetricConfig {
                horizons: flags
                    .horizons
                    .clone()
                    .or(file.horizons)
                    .unwrap_or(metric_defaults.horizons),
                epsilon: pick(flags.epsilon, file.epsilon, metric_defaults.epsilon),
                optimum_fraction: pick(
                    flags.optimum_fraction,
                    file.optimum_fraction,
                    metric_defaults.optimum_fraction,
                ),
                convergence_tolerance: pick(
                    flags.convergence_tolerance,
                    file.convergence_tolerance,
                    metric_defaults.convergence_tolerance,
                ),
                baseline_optimizer: metric_defaults.baseline_optimizer,
            },
            tie_tolerance: pick(
                flags.tie_tolerance,
                file.tie_tolerance,
                bsfbench_core::analysis::DEFAULT_TIE_TOLERANCE,
            ),
            range_samples: flags
                .range_samples
                .or(file.range_samples)
                .unwrap_or(100_000),
            bootstrap_replicates: flags
                .bootstrap_replicates
                .or(file.bootstrap_replicates)
                .unwrap_or(10_000),
            thresholds: AuditThresholds {
                alignment_min: pick(
                    flags.alignment_min,
                    file.alignment_min,
                    threshold_defaults.alignment_min,
                ),
                range_gap_min: pick(
                    flags.range_gap_min,
                    file.range_gap_min,
                    threshold_defaults.range_gap_min,
                ),
                sigma_gap_min: pick(
                    flags.sigma_gap_min,
                    file.sigma_gap_min,
                    threshold_defaults.sigma_gap_min,
                ),
            },
            grouping: flags.grouping.or(file.grouping).unwrap_or_default(),
            gp: file.gp.unwrap_or_default(),
            refresh_cache: flags.refresh_cache,
        };
        settings.check()?;
        Ok(settings)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.metrics.horizons.is_empty() || self.metrics.horizons.contains(&0) {
            return bad("horizons must be a non-empty list of positive integers".into());
        }
        if !(self.metrics.optimum_fraction > 0.0 && self.metrics.optimum_fraction <= 1.0) {
            return bad(format!(
                "optimum fraction must lie in (0, 1], got {}",
                self.metrics.optimum_fraction
            ));
        }
        if self.tie_tolerance < 0.0 || self.metrics.epsilon <= 0.0 {
            return bad("tie tolerance must be >= 0 and epsilon > 0".into());
        }
        self.gp
            .check()
            .map_err(|e| CliError::Usage(format!("gp config: {e}")))?;
        Ok(())
    }

    /// Largest configured horizon.
    pub fn max_horizon(&self) -> usize {
        self.metrics.horizons.iter().copied().max().unwrap_or(30)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "global_seed = 7\nworkers = 3\nepsilon = 0.5\n").unwrap();
        let flags = Overrides {
            config: Some(path),
            workers: Some(2),
            ..Default::default()
        };
        let s = Settings::resolve(&flags).unwrap();
        assert_eq!((s.global_seed, s.workers, s.iters), (7, 2, 30));
        assert_eq!(s.metrics.epsilon, 0.5);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seeds = 7\n").unwrap();
        let flags = Overrides {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(
            Settings::resolve(&flags),
            Err(CliError::ConfigInvalid { .. })
        ));
    }
}
