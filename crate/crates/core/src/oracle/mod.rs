//! Surrogate oracles.
//!
//! Each task's oracle is a deterministic regressor trained on the task's
//! published dataset. Candidate families are compared by leave-one-out R²
//! and the winner is refit on every row. Features are the encoded design
//! (min-max scaled numerics, one-hot categoricals).
//!
//! Missing values: during training a missing numeric takes the column mean
//! and a missing categorical the column mode; at prediction time a missing
//! numeric takes the training mean and a missing categorical encodes as an
//! all-zero block.

mod dataset;
pub mod ridge;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{Dataset, Row};
use ridge::RidgeModel;
use tree::{BoostingParams, ForestParams, GradientBoosting, RandomForest};

use crate::space::{Design, Imputation, ParamKind, ParameterSpace, Value};

pub const ORACLE_FORMAT: &str = "bsfbench-oracle/1";

/// Ridge regularization grid, indexed by hyperparameter index.
pub const RIDGE_LAMBDAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("dataset has {0} rows, at least 3 are needed")]
    TooFewRows(usize),
    #[error("all targets are equal, R² is undefined")]
    DegenerateTarget,
    #[error("no model families requested")]
    EmptyFamilies,
    #[error("parameter `{0}` has no observed values in the dataset")]
    UnobservedParameter(String),
    #[error("hyperparameter index {index} out of range for {family}")]
    UnknownHyper { family: Family, index: usize },
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
    #[error("oracle file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Regressor family. The declaration order is the tie-break order used by
/// model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ridge,
    RandomForest,
    GradientBoosting,
}

impl Family {
    pub const ALL: [Family; 3] = [
        Family::Ridge,
        Family::RandomForest,
        Family::GradientBoosting,
    ];

    pub fn grid_len(self) -> usize {
        match self {
            Family::Ridge => RIDGE_LAMBDAS.len(),
            Family::RandomForest | Family::GradientBoosting => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Ridge => "ridge",
            Family::RandomForest => "random_forest",
            Family::GradientBoosting => "gradient_boosting",
        }
    }

    pub fn is_tree(self) -> bool {
        !matches!(self, Family::Ridge)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown model family `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Regressor {
    Ridge(RidgeModel),
    RandomForest(RandomForest),
    GradientBoosting(GradientBoosting),
}

impl Regressor {
    fn fit(
        x: &[Vec<f64>],
        y: &[f64],
        family: Family,
        hyper: usize,
        seed: u64,
    ) -> Result<Self, OracleError> {
        if hyper >= family.grid_len() {
            return Err(OracleError::UnknownHyper {
                family,
                index: hyper,
            });
        }
        Ok(match family {
            Family::Ridge => Regressor::Ridge(RidgeModel::fit(x, y, RIDGE_LAMBDAS[hyper])?),
            Family::RandomForest => {
                Regressor::RandomForest(RandomForest::fit(x, y, ForestParams::default(), seed))
            }
            Family::GradientBoosting => {
                Regressor::GradientBoosting(GradientBoosting::fit(x, y, BoostingParams::default()))
            }
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Ridge(m) => m.predict(x),
            Regressor::RandomForest(m) => m.predict(x),
            Regressor::GradientBoosting(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStat {
    pub name: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalStat {
    pub name: String,
    pub mode: String,
}

/// Training-set column summaries used for imputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub numeric: Vec<NumericStat>,
    pub categorical: Vec<CategoricalStat>,
}

impl FeatureStats {
    pub fn compute(space: &ParameterSpace, data: &Dataset) -> Result<Self, OracleError> {
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for spec in space.params() {
            match &spec.kind {
                ParamKind::Numeric { .. } => {
                    let values: Vec<f64> =
                        data.column(&spec.name).filter_map(Value::as_num).collect();
                    if values.is_empty() {
                        return Err(OracleError::UnobservedParameter(spec.name.clone()));
                    }
                    numeric.push(NumericStat {
                        name: spec.name.clone(),
                        mean: values.iter().sum::<f64>() / values.len() as f64,
                        min: values.iter().copied().fold(f64::INFINITY, f64::min),
                        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    });
                }
                ParamKind::Categorical { .. } => {
                    let mode = modal_value(data.column(&spec.name).filter_map(Value::as_cat))
                        .ok_or_else(|| OracleError::UnobservedParameter(spec.name.clone()))?;
                    categorical.push(CategoricalStat {
                        name: spec.name.clone(),
                        mode,
                    });
                }
            }
        }
        Ok(Self {
            numeric,
            categorical,
        })
    }

    /// Training means on the encoded [0, 1] scale, one per numeric parameter.
    fn scaled_means(&self, space: &ParameterSpace) -> Vec<f64> {
        space
            .numeric_params()
            .zip(&self.numeric)
            .map(|(spec, stat)| {
                let (lo, hi) = spec.bounds().expect("numeric");
                (stat.mean - lo) / (hi - lo)
            })
            .collect()
    }

    fn complete_for_training(&self, design: &Design) -> Design {
        let mut d = design.clone();
        for s in &self.numeric {
            if d.get(&s.name).is_none() {
                d.insert(s.name.clone(), Value::Num(s.mean));
            }
        }
        for s in &self.categorical {
            if d.get(&s.name).is_none() {
                d.insert(s.name.clone(), Value::Cat(s.mode.clone()));
            }
        }
        d
    }
}

/// Most frequent string; ties go to the lexicographically smallest.
pub fn modal_value<'a>(values: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    // BTreeMap iterates in ascending key order, so the first maximum wins.
    let mut best: Option<(&str, usize)> = None;
    for (k, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k.to_string())
}

/// A regressor together with the statistics needed to encode its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub feature_stats: FeatureStats,
    pub regressor: Regressor,
}

impl FittedModel {
    /// Fits one (family, hyperparameter) configuration on every row.
    pub fn fit(
        space: &ParameterSpace,
        data: &Dataset,
        family: Family,
        hyper: usize,
        seed: u64,
    ) -> Result<Self, OracleError> {
        if data.is_empty() {
            return Err(OracleError::TooFewRows(0));
        }
        let feature_stats = FeatureStats::compute(space, data)?;
        let x: Vec<Vec<f64>> = data
            .rows
            .iter()
            .map(|r| {
                space
                    .encode(&feature_stats.complete_for_training(&r.design))
                    .0
            })
            .collect();
        let y: Vec<f64> = data.targets().collect();
        let regressor = Regressor::fit(&x, &y, family, hyper, seed)?;
        Ok(Self {
            feature_stats,
            regressor,
        })
    }

    pub fn encode(&self, space: &ParameterSpace, design: &Design) -> Vec<f64> {
        let means = self.feature_stats.scaled_means(space);
        space.encode_with(design, Imputation::PerNumeric(&means)).0
    }

    pub fn predict(&self, space: &ParameterSpace, design: &Design) -> f64 {
        self.regressor.predict(&self.encode(space, design))
    }
}

/// The selected oracle of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub family: Family,
    pub hyper_index: usize,
    pub loo_r2: f64,
    pub train_seed: u64,
    pub target_name: String,
    #[serde(flatten)]
    pub fitted: FittedModel,
}

#[derive(Serialize, Deserialize)]
struct OracleFile {
    format: String,
    #[serde(flatten)]
    model: OracleModel,
}

impl OracleModel {
    /// Deterministic prediction in original target units.
    pub fn predict(&self, space: &ParameterSpace, design: &Design) -> f64 {
        self.fitted.predict(space, design)
    }

    pub fn to_json(&self) -> String {
        let file = OracleFile {
            format: ORACLE_FORMAT.to_string(),
            model: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("oracle models always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let file: OracleFile =
            serde_json::from_str(text).map_err(|e| OracleError::Format(e.to_string()))?;
        if file.format != ORACLE_FORMAT {
            return Err(OracleError::Format(format!(
                "unsupported format tag `{}`",
                file.format
            )));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, OracleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Leave-one-out R² for an arbitrary fit-and-predict procedure.
///
/// `predict_held_out(train, held_out)` must fit on `train` and return the
/// prediction for `held_out`.
pub fn loo_r2_by<F>(data: &Dataset, mut predict_held_out: F) -> Result<f64, OracleError>
where
    F: FnMut(&Dataset, &Design) -> Result<f64, OracleError>,
{
    if data.len() < 3 {
        return Err(OracleError::TooFewRows(data.len()));
    }
    let n = data.len() as f64;
    let mean = data.targets().sum::<f64>() / n;
    let ss_tot: f64 = data.targets().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(OracleError::DegenerateTarget);
    }
    let mut ss_res = 0.0;
    for (i, row) in data.rows.iter().enumerate() {
        let pred = predict_held_out(&data.without_row(i), &row.design)?;
        ss_res += (row.target - pred) * (row.target - pred);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Leave-one-out R² of one (family, hyperparameter) configuration. Every
/// fold is fit with the same seed.
pub fn loo_r2(
    space: &ParameterSpace,
    data: &Dataset,
    family: Family,
    hyper: usize,
    seed: u64,
) -> Result<f64, OracleError> {
    loo_r2_by(data, |train, held_out| {
        Ok(FittedModel::fit(space, train, family, hyper, seed)?.predict(space, held_out))
    })
}

/// Selects the (family, hyperparameter) pair with the highest LOO R² and
/// refits it on all rows. Ties keep the earlier family, then the smaller
/// hyperparameter index.
pub fn fit_oracle(
    space: &ParameterSpace,
    data: &Dataset,
    seed: u64,
    families: &[Family],
) -> Result<OracleModel, OracleError> {
    if families.is_empty() {
        return Err(OracleError::EmptyFamilies);
    }
    if data.len() < 3 {
        return Err(OracleError::TooFewRows(data.len()));
    }
    let mut ordered = families.to_vec();
    ordered.sort();
    ordered.dedup();
    let mut best: Option<(Family, usize, f64)> = None;
    for family in ordered {
        for hyper in 0..family.grid_len() {
            let r2 = loo_r2(space, data, family, hyper, seed)?;
            log::debug!("{family}[{hyper}] loo_r2={r2}");
            if best.is_none_or(|(_, _, b)| r2 > b) {
                best = Some((family, hyper, r2));
            }
        }
    }
    let (family, hyper_index, loo_r2) = best.expect("at least one configuration");
    let fitted = FittedModel::fit(space, data, family, hyper_index, seed)?;
    Ok(OracleModel {
        family,
        hyper_index,
        loo_r2,
        train_seed: seed,
        target_name: data.target_name.clone(),
        fitted,
    })
}
