//! Task-level types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::oracle::{Dataset, OracleModel};
use crate::space::{Design, ParameterSpace};

/// Objective direction of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// +1 for maximize, -1 for minimize. Multiplying a score by this gives a
    /// value where larger is always better.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Maximize => 1.0,
            Direction::Minimize => -1.0,
        }
    }

    pub fn orient(self, score: f64) -> f64 {
        self.sign() * score
    }

    /// True when `a` is strictly better than `b`.
    pub fn improves(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Maximize => "maximize",
            Direction::Minimize => "minimize",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "maximize" => Ok(Direction::Maximize),
            "minimize" => Ok(Direction::Minimize),
            other => Err(format!(
                "objective must be `maximize` or `minimize`, got `{other}`"
            )),
        }
    }
}

/// Prompt condition of a run. Optimizers that never see names (GP-UCB,
/// random search) run under [`Condition::None`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    DomainAware,
    DomainAgnostic,
    None,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::DomainAware => "domain_aware",
            Condition::DomainAgnostic => "domain_agnostic",
            Condition::None => "none",
        }
    }

    pub fn is_masked(self) -> bool {
        !matches!(self, Condition::DomainAware)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "domain_aware" => Ok(Condition::DomainAware),
            "domain_agnostic" => Ok(Condition::DomainAgnostic),
            "none" => Ok(Condition::None),
            other => Err(format!("unknown condition `{other}`")),
        }
    }
}

/// A fully loaded benchmark task.
#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub name: String,
    pub direction: Direction,
    pub space: ParameterSpace,
    pub dataset: Dataset,
    pub oracle: OracleModel,
    pub baseline_runs_override: Option<usize>,
    /// Cached best and worst oracle predictions over a uniform sample of the
    /// space, in original units. Used by fraction-of-optimum curves.
    pub oracle_range: Option<OracleRange>,
    pub key_column_override: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRange {
    pub optimum: f64,
    pub worst: f64,
}

impl TaskSpec {
    /// Oracle score of a validated design, in original units.
    pub fn score(&self, design: &Design) -> f64 {
        self.oracle.predict(&self.space, design)
    }
}
