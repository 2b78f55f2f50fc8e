//! The run matrix, the fallback policy and trajectory persistence.

mod store;

use std::fmt;
use std::path::PathBuf;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{check_name, load_corpus, CorpusFilter, TrajectoryStore, STORE_EXTENSION};

use crate::optim::{
    run_optimizer, AgentSession, GpUcbConfig, OptimError, Proposer, TransportFactory,
};
use crate::seed::derive_seed;
use crate::space::Design;
use crate::task::{Condition, Direction, TaskSpec};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{path}:{line}: corrupt record: {message}")]
    CorruptRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(
        "name `{0}` is not usable in store file names (allowed: A-Z a-z 0-9 _ - . without `__`)"
    )]
    InvalidName(String),
    #[error("{cell} run {run}: {source}")]
    Optim {
        cell: String,
        run: usize,
        source: OptimError,
    },
    #[error("replay source has no trajectory for {0}")]
    MissingReplay(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// The proposal as received, before clipping or trimming.
    pub raw: Design,
    /// The validated design that was scored.
    pub design: Design,
    pub score: f64,
    pub fallback: bool,
    pub retries_used: usize,
}

impl Step {
    pub fn scored(raw: Design, design: Design, score: f64) -> Self {
        Self {
            raw,
            design,
            score,
            fallback: false,
            retries_used: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: String,
    pub direction: Direction,
    pub optimizer: String,
    pub condition: Condition,
    pub run_index: usize,
    pub seed: u64,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn scores(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.score).collect()
    }

    pub fn designs(&self) -> impl Iterator<Item = &Design> {
        self.steps.iter().map(|s| &s.design)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("trajectory has no steps".into());
        }
        if let Some(i) = self.steps.iter().position(|s| !s.score.is_finite()) {
            return Err(format!("step {} has a non-finite score", i + 1));
        }
        Ok(())
    }
}

/// Score given to fallback steps: the worst measured target of the task's
/// dataset.
pub fn worst_score(task: &TaskSpec) -> f64 {
    let targets = task.dataset.targets();
    match task.direction {
        Direction::Maximize => targets.fold(f64::INFINITY, f64::min),
        Direction::Minimize => targets.fold(f64::NEG_INFINITY, f64::max),
    }
}

#[derive(Clone)]
pub enum OptimizerKind {
    GpUcb(GpUcbConfig),
    Random,
    /// Replays stored trajectories, matched by (task, condition, run index).
    /// Sources recorded under [`Condition::None`] match any condition.
    Replay(Vec<Trajectory>),
    Agent {
        factory: TransportFactory,
        max_retries: usize,
    },
}

impl OptimizerKind {
    /// Baseline optimizers see no names and run once per task under
    /// [`Condition::None`] with the baseline run count.
    pub fn is_baseline(&self) -> bool {
        matches!(self, OptimizerKind::GpUcb(_) | OptimizerKind::Random)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            OptimizerKind::GpUcb(_) => "gp_ucb",
            OptimizerKind::Random => "random",
            OptimizerKind::Replay(_) => "replay",
            OptimizerKind::Agent { .. } => "agent",
        }
    }
}

impl fmt::Debug for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::GpUcb(c) => f.debug_tuple("GpUcb").field(c).finish(),
            OptimizerKind::Random => f.write_str("Random"),
            OptimizerKind::Replay(t) => write!(f, "Replay({} trajectories)", t.len()),
            OptimizerKind::Agent { max_retries, .. } => {
                write!(f, "Agent {{ max_retries: {max_retries} }}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerEntry {
    pub name: String,
    pub kind: OptimizerKind,
}

#[derive(Debug, Clone)]
pub struct RunPlan {
    pub tasks: Vec<TaskSpec>,
    pub optimizers: Vec<OptimizerEntry>,
    /// Conditions for non-baseline optimizers.
    pub conditions: Vec<Condition>,
    pub runs_per_cell: usize,
    pub iters: usize,
    pub baseline_runs: usize,
    pub global_seed: u64,
    pub workers: usize,
}

impl RunPlan {
    pub fn new(tasks: Vec<TaskSpec>, optimizers: Vec<OptimizerEntry>, global_seed: u64) -> Self {
        Self {
            tasks,
            optimizers,
            conditions: vec![Condition::DomainAware, Condition::DomainAgnostic],
            runs_per_cell: 4,
            iters: 30,
            baseline_runs: 200,
            global_seed,
            workers: 1,
        }
    }

    fn check(&self) -> Result<(), RunnerError> {
        if self.runs_per_cell == 0 || self.iters == 0 {
            return Err(RunnerError::InvalidPlan(
                "runs_per_cell and iters must be at least 1".into(),
            ));
        }
        for t in &self.tasks {
            check_name(&t.name)?;
        }
        for o in &self.optimizers {
            check_name(&o.name)?;
            if !o.kind.is_baseline() && self.conditions.contains(&Condition::None) {
                return Err(RunnerError::InvalidPlan(
                    "agent and replay runs need a prompt condition".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Seed of one run, stable under reordering and re-execution of the plan.
pub fn run_seed(
    task: &str,
    optimizer: &str,
    condition: Condition,
    run_index: usize,
    global_seed: u64,
) -> u64 {
    derive_seed(&[
        task.into(),
        optimizer.into(),
        condition.as_str().into(),
        run_index.into(),
        global_seed.into(),
    ])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusSummary {
    pub cells: usize,
    pub runs_total: usize,
    pub runs_new: usize,
    pub steps_new: usize,
    pub fallback_steps_new: usize,
}

struct Cell<'a> {
    task: &'a TaskSpec,
    optimizer: &'a OptimizerEntry,
    condition: Condition,
    runs: usize,
}

impl Cell<'_> {
    fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.task.name, self.optimizer.name, self.condition
        )
    }
}

/// Runs every missing trajectory of the plan and appends it to the store.
/// Cells run concurrently up to `plan.workers`; each cell's records are
/// appended in run-index order so store files do not depend on scheduling.
pub fn execute_plan(plan: &RunPlan, store: &TrajectoryStore) -> Result<CorpusSummary, RunnerError> {
    plan.check()?;
    let mut cells = Vec::new();
    for task in &plan.tasks {
        for optimizer in &plan.optimizers {
            if optimizer.kind.is_baseline() {
                let runs = task.baseline_runs_override.unwrap_or(plan.baseline_runs);
                cells.push(Cell {
                    task,
                    optimizer,
                    condition: Condition::None,
                    runs,
                });
            } else {
                for &condition in &plan.conditions {
                    cells.push(Cell {
                        task,
                        optimizer,
                        condition,
                        runs: plan.runs_per_cell,
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers.max(1))
        .build()
        .map_err(|e| RunnerError::Io(e.to_string()))?;
    let summary = Mutex::new(CorpusSummary {
        cells: cells.len(),
        ..Default::default()
    });
    pool.install(|| {
        cells.par_iter().try_for_each(|cell| {
            let done = run_cell(plan, store, cell)?;
            let mut s = summary.lock().expect("summary lock");
            s.runs_total += cell.runs;
            s.runs_new += done.runs_new;
            s.steps_new += done.steps_new;
            s.fallback_steps_new += done.fallback_steps_new;
            Ok::<_, RunnerError>(())
        })
    })?;
    Ok(summary.into_inner().expect("summary lock"))
}

fn run_cell(
    plan: &RunPlan,
    store: &TrajectoryStore,
    cell: &Cell<'_>,
) -> Result<CorpusSummary, RunnerError> {
    let stored = store.stored_runs(&cell.task.name, &cell.optimizer.name, cell.condition)?;
    let missing: Vec<usize> = (0..cell.runs).filter(|i| !stored.contains(i)).collect();
    let mut summary = CorpusSummary::default();
    if missing.is_empty() {
        return Ok(summary);
    }
    log::info!(
        "{}: {} of {} runs to execute",
        cell.label(),
        missing.len(),
        cell.runs
    );
    let chunk = (plan.workers.max(1) * 4).max(8);
    for batch in missing.chunks(chunk) {
        let trajectories = batch
            .par_iter()
            .map(|&run| execute_run(plan, cell, run))
            .collect::<Result<Vec<_>, _>>()?;
        store.append(&trajectories)?;
        for t in &trajectories {
            summary.runs_new += 1;
            summary.steps_new += t.steps.len();
            summary.fallback_steps_new += t.steps.iter().filter(|s| s.fallback).count();
        }
    }
    Ok(summary)
}

fn execute_run(plan: &RunPlan, cell: &Cell<'_>, run: usize) -> Result<Trajectory, RunnerError> {
    let task = cell.task;
    let seed = run_seed(
        &task.name,
        &cell.optimizer.name,
        cell.condition,
        run,
        plan.global_seed,
    );
    let wrap = |source| RunnerError::Optim {
        cell: cell.label(),
        run,
        source,
    };
    let steps = match &cell.optimizer.kind {
        OptimizerKind::GpUcb(config) => {
            run_optimizer(Proposer::GpUcb(config), task, plan.iters, seed).map_err(wrap)?
        }
        OptimizerKind::Random => {
            run_optimizer(Proposer::Random, task, plan.iters, seed).map_err(wrap)?
        }
        OptimizerKind::Replay(sources) => {
            let source = sources
                .iter()
                .find(|t| {
                    t.task == task.name && t.run_index == run && t.condition == cell.condition
                })
                .or_else(|| {
                    sources.iter().find(|t| {
                        t.task == task.name && t.run_index == run && t.condition == Condition::None
                    })
                })
                .ok_or_else(|| RunnerError::MissingReplay(format!("{} run {run}", cell.label())))?;
            run_optimizer(Proposer::Replay(&source.steps), task, plan.iters, seed).map_err(wrap)?
        }
        OptimizerKind::Agent {
            factory,
            max_retries,
        } => {
            let transport = factory();
            if let Err(e) = &transport {
                log::debug!(
                    "{} run {run}: agent unavailable ({e}); every step falls back",
                    cell.label()
                );
            }
            let mut session = AgentSession::new(
                transport,
                cell.condition,
                &task.name,
                &task.space,
                *max_retries,
            );
            run_optimizer(Proposer::Agent(&mut session), task, plan.iters, seed).map_err(wrap)?
        }
    };
    Ok(Trajectory {
        task: task.name.clone(),
        direction: task.direction,
        optimizer: cell.optimizer.name.clone(),
        condition: cell.condition,
        run_index: run,
        seed,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{fit_oracle, Dataset, Family, Row};
    use crate::space::{ParameterSpace, ParameterSpec};
    use std::sync::Arc;

    pub(crate) fn toy_task(direction: Direction) -> TaskSpec {
        let space = ParameterSpace::new(
            "toy",
            vec![
                ParameterSpec::numeric("x", 0.0, 10.0).unwrap(),
                ParameterSpec::categorical("c", ["A", "B"]).unwrap(),
            ],
        )
        .unwrap();
        let rows: Vec<Row> = (0..8)
            .map(|i| Row {
                design: Design::new()
                    .num("x", i as f64)
                    .cat("c", if i % 2 == 0 { "A" } else { "B" }),
                target: (i as f64) * 1.5 + if i % 2 == 0 { 0.0 } else { 2.0 },
            })
            .collect();
        let dataset = Dataset::new(&space, rows, "y", direction).unwrap();
        let oracle = fit_oracle(&space, &dataset, 1, &[Family::Ridge]).unwrap();
        TaskSpec {
            name: "toy".into(),
            direction,
            space,
            dataset,
            oracle,
            baseline_runs_override: None,
            oracle_range: None,
            key_column_override: None,
        }
    }

    #[test]
    fn worst_score_follows_direction() {
        let t = toy_task(Direction::Maximize);
        assert_eq!(worst_score(&t), 0.0);
        let t = toy_task(Direction::Minimize);
        assert_eq!(worst_score(&t), 7.0 * 1.5 + 2.0);
    }

    fn random_plan(runs: usize) -> RunPlan {
        let mut plan = RunPlan::new(
            vec![toy_task(Direction::Maximize)],
            vec![OptimizerEntry {
                name: "random".into(),
                kind: OptimizerKind::Random,
            }],
            11,
        );
        plan.baseline_runs = runs;
        plan.workers = 3;
        plan
    }

    #[test]
    fn matrix_resume_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let store = TrajectoryStore::new(dir.path().join("a"));
        let s = execute_plan(&random_plan(4), &store).unwrap();
        assert_eq!((s.runs_new, s.steps_new), (4, 120));
        let again = execute_plan(&random_plan(4), &store).unwrap();
        assert_eq!(again.runs_new, 0);
        let loaded = store.load(&CorpusFilter::default(), false).unwrap();
        assert_eq!(
            loaded.iter().map(|t| t.run_index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );

        let other = TrajectoryStore::new(dir.path().join("b"));
        let mut plan = random_plan(4);
        plan.workers = 1;
        execute_plan(&plan, &other).unwrap();
        let a = std::fs::read(store.cell_path("toy", "random", Condition::None)).unwrap();
        let b = std::fs::read(other.cell_path("toy", "random", Condition::None)).unwrap();
        assert_eq!(a, b);

        let none = store
            .load(
                &CorpusFilter {
                    task: Some("absent".into()),
                    ..Default::default()
                },
                false,
            )
            .unwrap();
        assert!(none.is_empty());
        assert!(TrajectoryStore::new(dir.path().join("empty"))
            .load(&CorpusFilter::default(), false)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn persisted_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = TrajectoryStore::new(dir.path());
        let task = toy_task(Direction::Maximize);
        let steps = run_optimizer(Proposer::Random, &task, 5, 3).unwrap();
        let t = Trajectory {
            task: "toy".into(),
            direction: Direction::Maximize,
            optimizer: "random".into(),
            condition: Condition::None,
            run_index: 0,
            seed: 3,
            steps,
        };
        store.append(std::slice::from_ref(&t)).unwrap();
        assert_eq!(
            store.load(&CorpusFilter::default(), false).unwrap(),
            vec![t]
        );
    }

    #[test]
    fn corrupt_lines_are_fatal_unless_lenient() {
        let dir = tempfile::tempdir().unwrap();
        let store = TrajectoryStore::new(dir.path());
        execute_plan(&random_plan(2), &store).unwrap();
        let path = store.cell_path("toy", "random", Condition::None);
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"task\": \n");
        std::fs::write(&path, text).unwrap();
        match store.load(&CorpusFilter::default(), false) {
            Err(RunnerError::CorruptRecord { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert_eq!(store.load(&CorpusFilter::default(), true).unwrap().len(), 2);
    }

    #[test]
    fn failing_agent_completes_with_fallbacks() {
        let dir = tempfile::tempdir().unwrap();
        let store = TrajectoryStore::new(dir.path());
        let factory: TransportFactory = Arc::new(|| Err("unreachable".to_string()));
        let mut plan = RunPlan::new(
            vec![toy_task(Direction::Maximize)],
            vec![OptimizerEntry {
                name: "agent".into(),
                kind: OptimizerKind::Agent {
                    factory,
                    max_retries: 2,
                },
            }],
            0,
        );
        plan.runs_per_cell = 2;
        plan.iters = 6;
        let s = execute_plan(&plan, &store).unwrap();
        assert_eq!(s.runs_new, 4);
        assert_eq!(s.fallback_steps_new, 24);
        let all = store.load(&CorpusFilter::default(), false).unwrap();
        assert!(all
            .iter()
            .all(|t| t.steps.len() == 6 && t.steps.iter().all(|s| s.fallback && s.score == 0.0)));
    }
}
