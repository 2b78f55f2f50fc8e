//! Evaluation harness for sequential experimental design.
//!
//! Black-box optimizers (GP-UCB, random search, trajectory replay and an
//! external-agent adapter) are run against deterministic surrogate oracles
//! over mixed numeric/categorical parameter spaces. The resulting
//! trajectories are scored with best-so-far metrics, compared with rank and
//! resampling statistics, and audited against the best design reported in
//! the source dataset.
//!
//! Module map:
//!
//! * [`space`]: parameter spaces, design validation, encoding and masking.
//! * [`oracle`]: surrogate regressors selected by leave-one-out R².
//! * [`optim`]: the optimizer implementations and the agent protocol.
//! * [`runner`]: the run matrix, fallback policy and trajectory store.
//! * [`metrics`]: best-so-far curves and every trajectory-level quantity.
//! * [`stats`]: bootstraps, exact tests and permutation tests.
//! * [`audit`]: the published-best audit.
//! * [`analysis`]: leaderboard analyses over per-cell summaries.

pub mod analysis;
pub mod audit;
pub mod format;
pub mod metrics;
pub mod optim;
pub mod oracle;
pub mod runner;
pub mod seed;
pub mod space;
pub mod stats;
pub mod task;

pub use metrics::{BsfCurve, MetricConfig};
pub use optim::{GpUcbConfig, Objective};
pub use oracle::{Dataset, Family, OracleModel};
pub use runner::{RunPlan, Step, Trajectory};
pub use space::{Design, EncodedDesign, NameMap, ParameterSpace, ParameterSpec, Value};
pub use stats::{Alternative, StatResult};
pub use task::{Condition, Direction, TaskSpec};
