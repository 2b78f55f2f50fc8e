//! Optimizers and the run loop that drives them.

pub mod agent;
pub mod gp;

use thiserror::Error;

pub use agent::{
    agent_exchange, AgentError, AgentRequest, AgentSession, Transport, TransportFactory,
};
pub use gp::{gp_ucb_propose, matern52, GaussianProcess, GpUcbConfig};

use crate::runner::Step;
use crate::seed::rng_from_seed;
use crate::space::{Design, ParameterSpace, SpaceError};
use crate::task::{Direction, TaskSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("Gram matrix is not positive definite even with jitter {jitter:e}")]
    SingularGram { jitter: f64 },
    #[error("replay sequence has {available} steps, {needed} requested")]
    ReplayExhausted { needed: usize, available: usize },
    #[error("agent failed and the objective defines no fallback score: {0}")]
    AgentFailure(String),
    #[error("invalid proposal at iteration {iteration}: {source}")]
    InvalidProposal {
        iteration: usize,
        source: SpaceError,
    },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
}

/// A black-box function over a parameter space.
pub trait Objective: Sync {
    fn name(&self) -> &str;
    fn space(&self) -> &ParameterSpace;
    fn direction(&self) -> Direction;
    /// Score of a validated design, in original units.
    fn score(&self, design: &Design) -> f64;
    /// Score recorded for steps where no usable proposal was obtained.
    fn fallback_score(&self) -> Option<f64> {
        None
    }
}

impl Objective for TaskSpec {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn score(&self, design: &Design) -> f64 {
        TaskSpec::score(self, design)
    }

    fn fallback_score(&self) -> Option<f64> {
        Some(crate::runner::worst_score(self))
    }
}

/// The source of proposals for one run.
pub enum Proposer<'a> {
    GpUcb(&'a GpUcbConfig),
    Random,
    /// Re-emits the steps of a stored trajectory; stored fallback steps are
    /// replayed as fallback steps.
    Replay(&'a [Step]),
    Agent(&'a mut AgentSession),
}

/// Runs `iters` iterations and returns the steps in order.
///
/// Every optimizer maximizes the direction-oriented score internally, while
/// the returned steps keep original-unit scores.
pub fn run_optimizer(
    proposer: Proposer<'_>,
    objective: &dyn Objective,
    iters: usize,
    seed: u64,
) -> Result<Vec<Step>, OptimError> {
    if iters == 0 {
        return Err(OptimError::InvalidConfig("iters must be at least 1".into()));
    }
    let space = objective.space();
    let direction = objective.direction();
    let mut rng = rng_from_seed(seed);
    let mut steps: Vec<Step> = Vec::with_capacity(iters);
    let mut proposer = proposer;
    if let Proposer::GpUcb(config) = &proposer {
        config.check()?;
    }
    if let Proposer::Replay(stored) = &proposer {
        if stored.len() < iters {
            return Err(OptimError::ReplayExhausted {
                needed: iters,
                available: stored.len(),
            });
        }
    }
    for t in 0..iters {
        let (raw, retries) = match &mut proposer {
            Proposer::Random => (space.sample_uniform(&mut rng), 0),
            Proposer::GpUcb(config) => {
                if t < config.seed_points {
                    (space.sample_uniform(&mut rng), 0)
                } else {
                    let history: Vec<(Vec<f64>, f64)> = steps
                        .iter()
                        .map(|s| (space.encode(&s.design).0, direction.orient(s.score)))
                        .collect();
                    (gp_ucb_propose(&history, space, config, &mut rng)?, 0)
                }
            }
            Proposer::Replay(stored) => {
                let step = &stored[t];
                if step.fallback {
                    steps.push(fallback_step(
                        objective,
                        step.retries_used,
                        "replayed fallback",
                    )?);
                    continue;
                }
                (step.design.clone(), 0)
            }
            Proposer::Agent(session) => {
                let history: Vec<agent::HistoryEntry> = steps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| agent::HistoryEntry {
                        iteration: i + 1,
                        design: s.design.clone(),
                        score: s.score,
                        fallback: s.fallback,
                    })
                    .collect();
                let request = session.request(direction, t + 1, iters, &history);
                match agent_exchange(session, request) {
                    Ok(p) => (p.design, p.retries_used),
                    Err(e) => {
                        let retries = match &e {
                            AgentError::ParseFailure { retries, .. } => *retries,
                            AgentError::TransportFailure(_) => 0,
                        };
                        steps.push(fallback_step(objective, retries, &e.to_string())?);
                        continue;
                    }
                }
            }
        };
        let validated = space
            .validate(&raw)
            .map_err(|source| OptimError::InvalidProposal {
                iteration: t + 1,
                source,
            })?;
        let score = objective.score(&validated.design);
        steps.push(Step {
            raw,
            design: validated.design,
            score,
            fallback: false,
            retries_used: retries,
        });
    }
    Ok(steps)
}

fn fallback_step(
    objective: &dyn Objective,
    retries: usize,
    reason: &str,
) -> Result<Step, OptimError> {
    let score = objective
        .fallback_score()
        .ok_or_else(|| OptimError::AgentFailure(reason.to_string()))?;
    log::debug!("{}: fallback step ({reason})", objective.name());
    Ok(Step {
        raw: Design::new(),
        design: Design::new(),
        score,
        fallback: true,
        retries_used: retries,
    })
}

/// An objective defined by a closure, for synthetic benchmarks and tests.
pub struct FnObjective<F> {
    pub name: String,
    pub space: ParameterSpace,
    pub direction: Direction,
    pub f: F,
    pub fallback: Option<f64>,
}

impl<F: Fn(&Design) -> f64 + Sync> Objective for FnObjective<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &ParameterSpace {
        &self.space
    }

    fn direction(&self) -> Direction {
        self.direction
    }

    fn score(&self, design: &Design) -> f64 {
        (self.f)(design)
    }

    fn fallback_score(&self) -> Option<f64> {
        self.fallback
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{best_so_far, bsf_outcome_at};
    use crate::space::{ParameterSpec, Value};
    use crate::task::Condition;

    fn x(d: &Design) -> f64 {
        d.get("x").and_then(Value::as_num).unwrap_or(f64::NAN)
    }

    fn parabola(direction: Direction) -> FnObjective<impl Fn(&Design) -> f64 + Sync> {
        let sign = direction.sign();
        FnObjective {
            name: "parabola".into(),
            space: ParameterSpace::new("p", vec![ParameterSpec::numeric("x", 0.0, 1.0).unwrap()])
                .unwrap(),
            direction,
            f: move |d: &Design| -sign * (x(d) - 0.3).powi(2),
            fallback: Some(-sign),
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let obj = parabola(Direction::Maximize);
        let a = run_optimizer(Proposer::Random, &obj, 10, 5).unwrap();
        let b = run_optimizer(Proposer::Random, &obj, 10, 5).unwrap();
        assert_eq!(a, b);
        let c = run_optimizer(Proposer::GpUcb(&GpUcbConfig::default()), &obj, 8, 5).unwrap();
        let d = run_optimizer(Proposer::GpUcb(&GpUcbConfig::default()), &obj, 8, 5).unwrap();
        assert_eq!(c, d);
        assert_eq!(c.len(), 8);
    }

    #[test]
    fn replay_recomputes_scores() {
        let obj = parabola(Direction::Maximize);
        let stored = run_optimizer(Proposer::Random, &obj, 30, 9).unwrap();
        let replayed = run_optimizer(Proposer::Replay(&stored), &obj, 30, 123).unwrap();
        for (a, b) in stored.iter().zip(&replayed) {
            assert_eq!(a.score, b.score);
        }
        assert_eq!(
            run_optimizer(Proposer::Replay(&stored[..5]), &obj, 6, 0),
            Err(OptimError::ReplayExhausted {
                needed: 6,
                available: 5
            })
        );
    }

    #[test]
    fn minimize_mirrors_maximize_on_negated_oracle() {
        let max = parabola(Direction::Maximize);
        let min = parabola(Direction::Minimize);
        let cfg = GpUcbConfig::default();
        let a = run_optimizer(Proposer::GpUcb(&cfg), &max, 12, 77).unwrap();
        let b = run_optimizer(Proposer::GpUcb(&cfg), &min, 12, 77).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.design, sb.design);
            assert_eq!(sa.score, -sb.score);
        }
    }

    #[test]
    fn gp_ucb_finds_parabola_peak() {
        let obj = parabola(Direction::Maximize);
        let cfg = GpUcbConfig::default();
        let mut outcomes: Vec<f64> = (0..15)
            .map(|seed| {
                let steps = run_optimizer(Proposer::GpUcb(&cfg), &obj, 30, seed).unwrap();
                let scores: Vec<f64> = steps.iter().map(|s| s.score).collect();
                bsf_outcome_at(&best_so_far(&scores, Direction::Maximize).unwrap(), 30).unwrap()
            })
            .collect();
        let median = crate::stats::median(&mut outcomes);
        assert!(median > -1e-2, "{median}");
    }

    #[test]
    fn dead_agent_yields_fallback_steps() {
        let obj = parabola(Direction::Maximize);
        let mut session = AgentSession::new(
            Err("down".into()),
            Condition::DomainAware,
            "parabola",
            &obj.space,
            2,
        );
        let steps = run_optimizer(Proposer::Agent(&mut session), &obj, 5, 0).unwrap();
        assert_eq!(steps.len(), 5);
        assert!(steps.iter().all(|s| s.fallback && s.score == -1.0));
    }
}
