//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use bsfbench_core::analysis::{
    convergent_gap_table, leave_one_out_rate, median_curves, metric_disagreement,
    paired_condition_win_rate, pass_rate_vs_baseline, summarize_cells, CellSummary, LeaveOutUnit,
};
use bsfbench_core::audit::{audit_task, summary_table, write_summary_table};
use bsfbench_core::format::sig6;
use bsfbench_core::metrics::{
    compute_metric_table, fraction_of_optimum_curve, grpo_group_rewards, read_metric_table,
    trajectory_curve, write_metric_table, MetricName, MetricRow, TableContext, GRPO_GROUP_SIZE,
};
use bsfbench_core::optim::agent::{HttpTransport, SubprocessTransport, Transport};
use bsfbench_core::oracle::{fit_oracle, Family};
use bsfbench_core::runner::{
    execute_plan, load_corpus, CorpusFilter, OptimizerEntry, OptimizerKind, TrajectoryStore,
};
use bsfbench_core::seed::derive_seed;
use bsfbench_core::stats::{binomial_sign_test, median, wilcoxon_signed_rank, Alternative};
use bsfbench_core::{Condition, Direction, RunPlan, TaskSpec, Trajectory};

use crate::config::Settings;
use crate::error::CliError;
use crate::manifest::{self, LoadOptions};
use crate::tables::{self, opt, write_csv};
use crate::Command;

/// Environment variable holding the bearer token of the HTTP agent
/// transport.
pub const AGENT_TOKEN_ENV: &str = "BSFBENCH_AGENT_TOKEN";

pub fn dispatch(command: Command, settings: &Settings) -> Result<(), CliError> {
    match command {
        Command::TrainOracle { task, families } => train_oracle(&task, &families, settings),
        Command::Baseline {
            tasks,
            store,
            optimizers,
        } => baseline(&tasks, &store, &optimizers, settings),
        Command::Run {
            tasks,
            store,
            agents,
            replays,
            conditions,
            max_retries,
            timeout_secs,
        } => run_agents(
            &tasks,
            &store,
            &agents,
            &replays,
            &conditions,
            max_retries,
            Duration::from_secs(timeout_secs),
            settings,
        ),
        Command::Metrics {
            store,
            tasks,
            out,
            lenient,
        } => metrics(&store, tasks.as_deref(), &out, lenient, settings),
        Command::Analyze {
            metrics,
            tasks,
            store,
            out,
            horizon,
            baseline,
            permissive,
        } => analyze(
            &metrics, &tasks, &store, &out, horizon, &baseline, permissive, settings,
        ),
        Command::Audit { tasks, store, out } => audit(&tasks, &store, &out, settings),
        Command::Report {
            tasks,
            store,
            out,
            baseline,
        } => report(&tasks, &store, &out, &baseline, settings),
    }
}

fn load_options(settings: &Settings) -> LoadOptions {
    LoadOptions {
        refresh_cache: settings.refresh_cache,
        range_samples: settings.range_samples,
        global_seed: settings.global_seed,
    }
}

fn load_tasks(root: &Path, settings: &Settings) -> Result<Vec<TaskSpec>, CliError> {
    let tasks = manifest::load_corpus_tasks(root, load_options(settings))?;
    if tasks.is_empty() {
        log::warn!("no tasks found under {}", root.display());
    }
    Ok(tasks)
}

fn load_store(store: &Path, lenient: bool) -> Result<Vec<Trajectory>, CliError> {
    load_corpus(store, &CorpusFilter::default(), lenient)
        .map_err(|e| CliError::data("CorruptRecord", e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn train_oracle(root: &Path, families: &[String], settings: &Settings) -> Result<(), CliError> {
    let families: Vec<Family> = families
        .iter()
        .map(|f| f.parse().map_err(|e: String| CliError::Usage(e)))
        .collect::<Result<_, _>>()?;
    let paths = manifest::discover_tasks(root)?;
    if paths.is_empty() {
        return Err(CliError::data(
            "TaskCorpusMissing",
            format!("no task manifests under {}", root.display()),
        ));
    }
    for path in paths {
        let m = manifest::read_manifest(&path)?;
        let data = manifest::load_dataset(&path, &m)?;
        let seed = derive_seed(&[
            "oracle".into(),
            m.name.as_str().into(),
            settings.global_seed.into(),
        ]);
        let oracle = fit_oracle(&m.space, &data, seed, &families)
            .map_err(|e| CliError::data("OracleFit", e))?;
        let out = manifest::oracle_path(&path, &m);
        oracle
            .save(&out)
            .map_err(|e| CliError::data("Io", format!("{}: {e}", out.display())))?;
        println!(
            "{} family={} hyper={} loo_r2={}",
            m.name,
            oracle.family,
            oracle.hyper_index,
            sig6(oracle.loo_r2)
        );
        if settings.refresh_cache {
            manifest::load_manifest(&path, load_options(settings))?;
        }
    }
    Ok(())
}

fn plan(tasks: Vec<TaskSpec>, optimizers: Vec<OptimizerEntry>, settings: &Settings) -> RunPlan {
    let mut plan = RunPlan::new(tasks, optimizers, settings.global_seed);
    plan.iters = settings.iters;
    plan.runs_per_cell = settings.runs_per_cell;
    plan.baseline_runs = settings.baseline_runs;
    plan.workers = settings.workers;
    plan
}

fn execute(plan: &RunPlan, store: &Path) -> Result<(), CliError> {
    let summary = execute_plan(plan, &TrajectoryStore::new(store))
        .map_err(|e| CliError::data("RunFailed", e))?;
    println!(
        "cells={} runs_total={} runs_new={} steps_new={} fallback_steps_new={}",
        summary.cells,
        summary.runs_total,
        summary.runs_new,
        summary.steps_new,
        summary.fallback_steps_new
    );
    if summary.fallback_steps_new > 0 {
        log::warn!(
            "{} of {} new steps fell back to the worst score",
            summary.fallback_steps_new,
            summary.steps_new
        );
    }
    Ok(())
}

fn baseline(
    root: &Path,
    store: &Path,
    names: &[String],
    settings: &Settings,
) -> Result<(), CliError> {
    let optimizers = names
        .iter()
        .map(|name| {
            let kind = match name.as_str() {
                "gp_ucb" => OptimizerKind::GpUcb(settings.gp.clone()),
                "random" => OptimizerKind::Random,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown baseline `{other}` (gp_ucb, random)"
                    )))
                }
            };
            Ok(OptimizerEntry {
                name: name.clone(),
                kind,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let tasks = load_tasks(root, settings)?;
    execute(&plan(tasks, optimizers, settings), store)
}

fn split_pair<'a>(flag: &str, value: &'a str) -> Result<(&'a str, &'a str), CliError> {
    value
        .split_once('=')
        .filter(|(name, rest)| !name.is_empty() && !rest.is_empty())
        .ok_or_else(|| CliError::Usage(format!("--{flag} expects NAME=VALUE, got `{value}`")))
}

#[allow(clippy::too_many_arguments)]
fn run_agents(
    root: &Path,
    store: &Path,
    agents: &[String],
    replays: &[String],
    conditions: &[String],
    max_retries: usize,
    timeout: Duration,
    settings: &Settings,
) -> Result<(), CliError> {
    if agents.is_empty() && replays.is_empty() {
        return Err(CliError::Usage(
            "`run` needs at least one --agent or --replay".into(),
        ));
    }
    let conditions: Vec<Condition> = conditions
        .iter()
        .map(|c| match c.parse() {
            Ok(Condition::None) | Err(_) => Err(CliError::Usage(format!(
                "condition must be domain_aware or domain_agnostic, got `{c}`"
            ))),
            Ok(c) => Ok(c),
        })
        .collect::<Result<_, _>>()?;
    let mut optimizers = Vec::new();
    for spec in agents {
        let (name, target) = split_pair("agent", spec)?;
        let factory: bsfbench_core::optim::TransportFactory =
            if let Some(cmd) = target.strip_prefix("cmd:") {
                let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
                if argv.is_empty() {
                    return Err(CliError::Usage(format!(
                        "agent `{name}` has an empty command"
                    )));
                }
                Arc::new(move || {
                    SubprocessTransport::spawn(&argv).map(|t| Box::new(t) as Box<dyn Transport>)
                })
            } else if let Some(url) = target.strip_prefix("http:") {
                let url = url.to_string();
                let token = std::env::var(AGENT_TOKEN_ENV).ok();
                Arc::new(move || {
                    Ok(
                        Box::new(HttpTransport::new(url.clone(), token.clone(), timeout))
                            as Box<dyn Transport>,
                    )
                })
            } else {
                return Err(CliError::Usage(format!(
                    "agent spec must start with `cmd:` or `http:`, got `{target}`"
                )));
            };
        optimizers.push(OptimizerEntry {
            name: name.to_string(),
            kind: OptimizerKind::Agent {
                factory,
                max_retries,
            },
        });
    }
    for spec in replays {
        let (name, dir) = split_pair("replay", spec)?;
        let filter = CorpusFilter {
            optimizer: Some(name.to_string()),
            ..Default::default()
        };
        let sources = load_corpus(Path::new(dir), &filter, false)
            .map_err(|e| CliError::data("CorruptRecord", e))?;
        if sources.is_empty() {
            return Err(CliError::data(
                "MissingReplay",
                format!("no runs of `{name}` in {dir}"),
            ));
        }
        optimizers.push(OptimizerEntry {
            name: name.to_string(),
            kind: OptimizerKind::Replay(sources),
        });
    }
    let tasks = load_tasks(root, settings)?;
    let mut plan = plan(tasks, optimizers, settings);
    plan.conditions = conditions;
    execute(&plan, store)
}

fn space_context(root: Option<&Path>) -> Result<TableContext, CliError> {
    let mut ctx = TableContext::default();
    if let Some(root) = root {
        for path in manifest::discover_tasks(root)? {
            let m = manifest::read_manifest(&path)?;
            ctx.spaces.insert(m.name, m.space);
        }
    }
    Ok(ctx)
}

fn metrics(
    store: &Path,
    tasks: Option<&Path>,
    out: &Path,
    lenient: bool,
    settings: &Settings,
) -> Result<(), CliError> {
    let trajectories = load_store(store, lenient)?;
    if trajectories.is_empty() {
        log::warn!(
            "store {} holds no trajectories; writing an empty table",
            store.display()
        );
    }
    let rows = compute_metric_table(&trajectories, &settings.metrics, &space_context(tasks)?);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let file = std::fs::File::create(out).map_err(|e| CliError::io(out, e))?;
    write_metric_table(&rows, std::io::BufWriter::new(file))
        .map_err(|e| CliError::data("Io", format!("{}: {e}", out.display())))?;
    println!("rows={} trajectories={}", rows.len(), trajectories.len());
    Ok(())
}

fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_metric_table(file)
        .map_err(|e| CliError::data("MetricTableInvalid", format!("{}: {e}", path.display())))
}

/// Competitor cells grouped by label.
fn by_label(cells: &[CellSummary]) -> BTreeMap<String, Vec<CellSummary>> {
    let mut out: BTreeMap<String, Vec<CellSummary>> = BTreeMap::new();
    for c in cells {
        out.entry(c.label()).or_default().push(c.clone());
    }
    out
}

fn fraction(n: usize, d: usize) -> String {
    if d == 0 {
        String::new()
    } else {
        sig6(n as f64 / d as f64)
    }
}

/// Median best-so-far curves per task, with the worst value attached to
/// minimize tasks.
fn task_curves(
    tasks: &[TaskSpec],
    trajectories: &[Trajectory],
    settings: &Settings,
) -> BTreeMap<String, bsfbench_core::analysis::TaskCurves> {
    let mut curves = median_curves(trajectories);
    for task in tasks {
        if let Some(tc) = curves.get_mut(&task.name) {
            if task.direction == Direction::Minimize {
                tc.worst = Some(manifest::task_range(task, load_options(settings)).worst);
            }
        }
    }
    curves
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    metrics_path: &Path,
    tasks_root: &Path,
    store: &Path,
    out: &Path,
    horizon: Option<usize>,
    baseline: &str,
    permissive: bool,
    settings: &Settings,
) -> Result<(), CliError> {
    let rows = read_metrics(metrics_path)?;
    let cells = summarize_cells(&rows);
    let k = horizon.unwrap_or_else(|| settings.max_horizon());
    let tol = settings.tie_tolerance;
    create_dir(out)?;

    let d = metric_disagreement(&cells, k, tol);
    let (header, records) = tables::disagreement_rows(&d, permissive);
    write_csv(&out.join("disagreement.csv"), &header, &records)?;
    let (header, grid) = tables::confusion_rows(&d);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(&out.join("confusion_matrix.csv"), &header, &grid)?;

    let mut horizon_header = vec!["horizon", "tasks", "disagreeing", "rate"];
    if permissive {
        horizon_header.push("permissive_rate_noncanonical");
    }
    let horizon_rows: Vec<Vec<String>> = settings
        .metrics
        .horizons
        .iter()
        .map(|&h| {
            let dh = metric_disagreement(&cells, h, tol);
            let mut row = vec![
                h.to_string(),
                dh.tasks.to_string(),
                dh.disagreeing.to_string(),
                sig6(dh.rate),
            ];
            if permissive {
                row.push(sig6(dh.permissive_rate));
            }
            row
        })
        .collect();
    write_csv(
        &out.join("disagreement_by_horizon.csv"),
        &horizon_header,
        &horizon_rows,
    )?;

    let labels = by_label(&cells);
    let baseline_cells = labels.get(baseline).cloned().unwrap_or_default();
    let mut pass_rows = Vec::new();
    if baseline_cells.is_empty() {
        log::warn!("no cells for baseline `{baseline}`; pass rates skipped");
    } else {
        for (label, group) in labels.iter().filter(|(l, _)| l.as_str() != baseline) {
            for metric in [MetricName::BsfAuc, MetricName::BsfOutcome] {
                for &h in &settings.metrics.horizons {
                    let pr = pass_rate_vs_baseline(group, &baseline_cells, metric, h)
                        .map_err(|e| CliError::data("MissingBaseline", e))?;
                    if pr.wins.is_empty() {
                        continue;
                    }
                    let wins = pr.wins.iter().filter(|w| w.1).count();
                    let p = binomial_sign_test(
                        wins as u64,
                        pr.wins.len() as u64,
                        0.5,
                        Alternative::Greater,
                    )
                    .map(|r| r.p_value)
                    .ok();
                    pass_rows.push(vec![
                        label.clone(),
                        metric.to_string(),
                        h.to_string(),
                        pr.wins.len().to_string(),
                        wins.to_string(),
                        sig6(pr.rate),
                        opt(p),
                    ]);
                }
            }
        }
    }
    write_csv(
        &out.join("pass_rates.csv"),
        &[
            "competitor",
            "metric",
            "horizon",
            "tasks",
            "wins",
            "rate",
            "sign_test_p_greater",
        ],
        &pass_rows,
    )?;

    let mut by_optimizer: BTreeMap<String, Vec<CellSummary>> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.condition != Condition::None) {
        by_optimizer
            .entry(c.optimizer.clone())
            .or_default()
            .push(c.clone());
    }
    let agent_cells: Vec<CellSummary> = by_optimizer.values().flatten().cloned().collect();
    let mut win_rows = Vec::new();
    let groups = by_optimizer
        .iter()
        .map(|(o, c)| (o.clone(), c.as_slice()))
        .chain((!agent_cells.is_empty()).then(|| ("all".to_string(), agent_cells.as_slice())));
    for (name, group) in groups {
        let w = paired_condition_win_rate(group, k);
        let diffs: Vec<f64> = w.pairs.iter().map(|p| p.aware - p.agnostic).collect();
        let p = wilcoxon_signed_rank(&diffs, Alternative::TwoSided)
            .map(|r| r.p_value)
            .ok();
        let wins = w.pairs.iter().filter(|p| p.win).count();
        win_rows.push(vec![
            name,
            w.pairs.len().to_string(),
            wins.to_string(),
            w.excluded.to_string(),
            fraction(wins, w.pairs.len()),
            opt(p),
        ]);
    }
    write_csv(
        &out.join("win_rates.csv"),
        &[
            "optimizer",
            "pairs",
            "wins",
            "excluded",
            "rate",
            "wilcoxon_p_two_sided",
        ],
        &win_rows,
    )?;

    let tasks = load_tasks(tasks_root, settings)?;
    let trajectories = load_store(store, false)?;
    let curves = task_curves(&tasks, &trajectories, settings);
    let gaps = convergent_gap_table(
        &d,
        &curves,
        k,
        settings.metrics.convergence_tolerance,
        settings.metrics.optimum_fraction,
    );
    write_csv(
        &out.join("convergent_gaps.csv"),
        &tables::GAP_HEADER,
        &tables::gap_rows(&gaps),
    )?;

    let loo = match leave_one_out_rate(&cells, LeaveOutUnit::Optimizer, |c| {
        metric_disagreement(c, k, tol).rate
    }) {
        Ok(v) => v,
        Err(e) => {
            log::warn!("leave-one-out skipped: {e}");
            Vec::new()
        }
    };
    let loo_rows: Vec<Vec<String>> = loo.into_iter().map(|(u, r)| vec![u, sig6(r)]).collect();
    write_csv(
        &out.join("leave_one_out.csv"),
        &["excluded_optimizer", "disagreement_rate"],
        &loo_rows,
    )?;

    let mut summary = vec![
        vec!["horizon".to_string(), k.to_string()],
        vec!["tasks".to_string(), d.tasks.to_string()],
        vec!["disagreeing_tasks".to_string(), d.disagreeing.to_string()],
        vec!["disagreement_rate".to_string(), sig6(d.rate)],
        vec![
            "convergent_gap_tasks".to_string(),
            gaps.rows.len().to_string(),
        ],
        vec![
            "median_auc_winner_iter".to_string(),
            opt(gaps.median_auc_winner_iter),
        ],
        vec![
            "median_outcome_winner_iter".to_string(),
            opt(gaps.median_outcome_winner_iter),
        ],
    ];
    if permissive {
        summary.push(vec![
            "permissive_disagreement_rate_noncanonical".to_string(),
            sig6(d.permissive_rate),
        ]);
    }
    write_csv(&out.join("summary.csv"), &["key", "value"], &summary)?;
    println!(
        "tasks={} disagreement_rate={} horizon={k}",
        d.tasks,
        sig6(d.rate)
    );
    Ok(())
}

fn audit(root: &Path, store: &Path, out: &Path, settings: &Settings) -> Result<(), CliError> {
    let tasks = load_tasks(root, settings)?;
    let trajectories = load_store(store, false)?;
    create_dir(out)?;
    let mut reports = Vec::new();
    for task in &tasks {
        let own: Vec<Trajectory> = trajectories
            .iter()
            .filter(|t| t.task == task.name)
            .cloned()
            .collect();
        match audit_task(task, &own, &settings.thresholds, settings.grouping) {
            Ok(r) => {
                let path = out.join(format!("audit_{}.json", task.name));
                std::fs::write(&path, r.to_json() + "\n").map_err(|e| CliError::io(&path, e))?;
                reports.push(r);
            }
            Err(e) => log::warn!("{}: audit skipped: {e}", task.name),
        }
    }
    let path = out.join("audit_summary.csv");
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_summary_table(&summary_table(&reports), file)
        .map_err(|e| CliError::data("Io", format!("{}: {e}", path.display())))?;
    println!("audited={} of {}", reports.len(), tasks.len());
    Ok(())
}

fn label_of(t: &Trajectory) -> String {
    match t.condition {
        Condition::None => t.optimizer.clone(),
        c => format!("{}@{c}", t.optimizer),
    }
}

fn report(
    root: &Path,
    store: &Path,
    out: &Path,
    baseline: &str,
    settings: &Settings,
) -> Result<(), CliError> {
    let tasks = load_tasks(root, settings)?;
    let trajectories = load_store(store, false)?;
    create_dir(out)?;

    let curves = task_curves(&tasks, &trajectories, settings);
    let mut rows = Vec::new();
    for (task, tc) in &curves {
        for (label, curve) in &tc.curves {
            for (i, v) in curve.iter().enumerate() {
                rows.push(vec![
                    task.clone(),
                    label.clone(),
                    (i + 1).to_string(),
                    sig6(*v),
                ]);
            }
        }
    }
    write_csv(
        &out.join("median_curves.csv"),
        &["task", "competitor", "iteration", "median_bsf"],
        &rows,
    )?;

    let mut grouped: BTreeMap<(String, String), Vec<Vec<f64>>> = BTreeMap::new();
    for task in &tasks {
        let range = manifest::task_range(task, load_options(settings));
        for t in trajectories.iter().filter(|t| t.task == task.name) {
            let Ok(curve) = trajectory_curve(t) else {
                continue;
            };
            match fraction_of_optimum_curve(&curve, range.optimum, range.worst) {
                Ok(f) => grouped
                    .entry((task.name.clone(), label_of(t)))
                    .or_default()
                    .push(f),
                Err(e) => log::warn!("{}: fraction-of-optimum skipped: {e}", task.name),
            }
        }
    }
    let mut rows = Vec::new();
    for ((task, label), runs) in &grouped {
        let len = runs.iter().map(Vec::len).min().unwrap_or(0);
        for i in 0..len {
            let v = median(&mut runs.iter().map(|r| r[i]).collect::<Vec<_>>());
            rows.push(vec![
                task.clone(),
                label.clone(),
                (i + 1).to_string(),
                sig6(v),
            ]);
        }
    }
    write_csv(
        &out.join("fraction_of_optimum.csv"),
        &["task", "competitor", "iteration", "median_fraction"],
        &rows,
    )?;

    let longest = trajectories
        .iter()
        .map(|t| t.steps.len())
        .max()
        .unwrap_or(0);
    let mut config = settings.metrics.clone();
    config.horizons = (1..=longest).collect();
    let per_iter = summarize_cells(&compute_metric_table(
        &trajectories,
        &config,
        &TableContext::default(),
    ));
    let labels = by_label(&per_iter);
    let mut pass_rows = Vec::new();
    let mut disagreement_rows = Vec::new();
    if let Some(base) = labels.get(baseline) {
        for (label, group) in labels.iter().filter(|(l, _)| l.as_str() != baseline) {
            for k in 1..=longest {
                let Ok(pr) = pass_rate_vs_baseline(group, base, MetricName::BsfAuc, k) else {
                    continue;
                };
                if !pr.wins.is_empty() {
                    pass_rows.push(vec![
                        label.clone(),
                        k.to_string(),
                        pr.wins.len().to_string(),
                        sig6(pr.rate),
                    ]);
                }
            }
        }
    } else {
        log::warn!("no cells for baseline `{baseline}`; pass-rate series skipped");
    }
    for k in 1..=longest {
        let d = metric_disagreement(&per_iter, k, settings.tie_tolerance);
        disagreement_rows.push(vec![k.to_string(), d.tasks.to_string(), sig6(d.rate)]);
    }
    write_csv(
        &out.join("pass_rate_series.csv"),
        &["competitor", "iteration", "tasks", "rate"],
        &pass_rows,
    )?;
    write_csv(
        &out.join("disagreement_series.csv"),
        &["iteration", "tasks", "rate"],
        &disagreement_rows,
    )?;

    let mut cells: BTreeMap<(String, String), Vec<&Trajectory>> = BTreeMap::new();
    for t in &trajectories {
        cells
            .entry((t.task.clone(), label_of(t)))
            .or_default()
            .push(t);
    }
    let mut grpo_rows = Vec::new();
    for ((task, label), runs) in &cells {
        for (g, chunk) in runs.chunks(GRPO_GROUP_SIZE).enumerate() {
            if chunk.len() < GRPO_GROUP_SIZE {
                continue;
            }
            let group: Vec<Trajectory> = chunk.iter().map(|t| (*t).clone()).collect();
            match grpo_group_rewards(&group, false) {
                Ok(rewards) => {
                    for (t, r) in group.iter().zip(rewards) {
                        grpo_rows.push(vec![
                            task.clone(),
                            label.clone(),
                            g.to_string(),
                            t.run_index.to_string(),
                            sig6(r),
                        ]);
                    }
                }
                Err(e) => log::warn!("{task}/{label} group {g}: {e}"),
            }
        }
    }
    write_csv(
        &out.join("grpo_rewards.csv"),
        &["task", "competitor", "group", "run", "reward"],
        &grpo_rows,
    )?;
    println!("tasks={} trajectories={}", tasks.len(), trajectories.len());
    Ok(())
}
