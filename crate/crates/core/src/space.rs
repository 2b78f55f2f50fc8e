//! Parameter spaces, designs, encoding and the name-masking transform.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("parameter `{0}` is not part of the space")]
    UnknownParameter(String),
    #[error("`{value}` is not an option of categorical parameter `{param}`")]
    UnknownOption { param: String, value: String },
    #[error("parameter `{param}` expects a {expected} value")]
    KindMismatch {
        param: String,
        expected: &'static str,
    },
    #[error("invalid parameter `{param}`: {reason}")]
    InvalidSpec { param: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter space has no parameters")]
    Empty,
}

/// A single design coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

/// A (possibly partial) assignment of values to parameter names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Design(pub BTreeMap<String, Value>);

impl Design {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn num(self, name: impl Into<String>, x: f64) -> Self {
        self.with(name, Value::Num(x))
    }

    pub fn cat(self, name: impl Into<String>, option: impl Into<String>) -> Self {
        self.with(name, Value::Cat(option.into()))
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.0.insert(name.into(), value);
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Numeric { lower: f64, upper: f64 },
    Categorical { options: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub unit: Option<String>,
}

/// Serialized form of a [`ParameterSpec`] as it appears in task manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    options: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
}

impl TryFrom<RawSpec> for ParameterSpec {
    type Error = SpaceError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        let invalid = |reason: &str| SpaceError::InvalidSpec {
            param: raw.name.clone(),
            reason: reason.to_string(),
        };
        match raw.kind.as_str() {
            "numeric" => {
                if raw.options.is_some() {
                    return Err(invalid("numeric parameters take no options"));
                }
                let (Some(lower), Some(upper)) = (raw.lower, raw.upper) else {
                    return Err(invalid("numeric parameters need `lower` and `upper`"));
                };
                ParameterSpec::numeric(&raw.name, lower, upper).map(|p| p.with_unit(raw.unit))
            }
            "categorical" => {
                if raw.lower.is_some() || raw.upper.is_some() {
                    return Err(invalid("categorical parameters take no bounds"));
                }
                let options = raw
                    .options
                    .ok_or_else(|| invalid("categorical parameters need `options`"))?;
                ParameterSpec::categorical(&raw.name, options).map(|p| p.with_unit(raw.unit))
            }
            other => Err(invalid(&format!("unknown kind `{other}`"))),
        }
    }
}

impl From<ParameterSpec> for RawSpec {
    fn from(spec: ParameterSpec) -> Self {
        match spec.kind {
            ParamKind::Numeric { lower, upper } => RawSpec {
                name: spec.name,
                kind: "numeric".into(),
                lower: Some(lower),
                upper: Some(upper),
                options: None,
                unit: spec.unit,
            },
            ParamKind::Categorical { options } => RawSpec {
                name: spec.name,
                kind: "categorical".into(),
                lower: None,
                upper: None,
                options: Some(options),
                unit: spec.unit,
            },
        }
    }
}

impl ParameterSpec {
    pub fn numeric(name: &str, lower: f64, upper: f64) -> Result<Self, SpaceError> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(SpaceError::InvalidSpec {
                param: name.to_string(),
                reason: format!("bounds must be finite with lower < upper, got [{lower}, {upper}]"),
            });
        }
        Ok(Self {
            name: name.to_string(),
            kind: ParamKind::Numeric { lower, upper },
            unit: None,
        })
    }

    pub fn categorical<S: Into<String>>(
        name: &str,
        options: impl IntoIterator<Item = S>,
    ) -> Result<Self, SpaceError> {
        let options: Vec<String> = options.into_iter().map(Into::into).collect();
        let distinct: HashSet<&String> = options.iter().collect();
        if options.len() < 2 || distinct.len() != options.len() {
            return Err(SpaceError::InvalidSpec {
                param: name.to_string(),
                reason: "categorical parameters need at least two distinct options".into(),
            });
        }
        Ok(Self {
            name: name.to_string(),
            kind: ParamKind::Categorical { options },
            unit: None,
        })
    }

    pub fn with_unit(mut self, unit: Option<String>) -> Self {
        self.unit = unit;
        self
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, ParamKind::Numeric { .. })
    }

    /// Number of encoded coordinates this parameter occupies.
    pub fn width(&self) -> usize {
        match &self.kind {
            ParamKind::Numeric { .. } => 1,
            ParamKind::Categorical { options } => options.len(),
        }
    }

    pub fn options(&self) -> Option<&[String]> {
        match &self.kind {
            ParamKind::Categorical { options } => Some(options),
            ParamKind::Numeric { .. } => None,
        }
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            ParamKind::Numeric { lower, upper } => Some((lower, upper)),
            ParamKind::Categorical { .. } => None,
        }
    }
}

/// Ordered list of parameters forming the search domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct ParameterSpace {
    name: String,
    params: Vec<ParameterSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    #[serde(default)]
    name: String,
    params: Vec<ParameterSpec>,
}

impl TryFrom<RawSpace> for ParameterSpace {
    type Error = SpaceError;

    fn try_from(raw: RawSpace) -> Result<Self, Self::Error> {
        ParameterSpace::new(raw.name, raw.params)
    }
}

impl From<ParameterSpace> for RawSpace {
    fn from(space: ParameterSpace) -> Self {
        RawSpace {
            name: space.name,
            params: space.params,
        }
    }
}

/// A clipping or cleanup applied while validating a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Correction {
    Clipped { param: String, from: f64, to: f64 },
    Trimmed { param: String, from: String },
    DroppedNan { param: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDesign {
    pub design: Design,
    pub corrections: Vec<Correction>,
}

/// Design vector: numerics min-max scaled to [0, 1], categoricals one-hot.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDesign(pub Vec<f64>);

impl EncodedDesign {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &EncodedDesign) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// What to put in the slot of a missing numeric parameter, on the encoded
/// [0, 1] scale.
#[derive(Debug, Clone, Copy)]
pub enum Imputation<'a> {
    Constant(f64),
    /// One value per numeric parameter, in declaration order.
    PerNumeric(&'a [f64]),
}

impl Default for Imputation<'_> {
    fn default() -> Self {
        Imputation::Constant(0.5)
    }
}

impl ParameterSpace {
    pub fn new(name: impl Into<String>, params: Vec<ParameterSpec>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut seen = HashSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            params,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParameterSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn numeric_params(&self) -> impl Iterator<Item = &ParameterSpec> {
        self.params.iter().filter(|p| p.is_numeric())
    }

    pub fn categorical_params(&self) -> impl Iterator<Item = &ParameterSpec> {
        self.params.iter().filter(|p| !p.is_numeric())
    }

    pub fn encoded_len(&self) -> usize {
        self.params.iter().map(ParameterSpec::width).sum()
    }

    /// Clips numerics into range and checks categoricals against the option
    /// list. Categorical strings are trimmed of surrounding whitespace and
    /// otherwise must match exactly. NaN numerics are treated as missing.
    pub fn validate(&self, design: &Design) -> Result<ValidatedDesign, SpaceError> {
        let mut out = Design::new();
        let mut corrections = Vec::new();
        for (name, value) in design.iter() {
            let spec = self
                .param(name)
                .ok_or_else(|| SpaceError::UnknownParameter(name.clone()))?;
            match (&spec.kind, value) {
                (ParamKind::Numeric { lower, upper }, Value::Num(x)) => {
                    if x.is_nan() {
                        corrections.push(Correction::DroppedNan {
                            param: name.clone(),
                        });
                        continue;
                    }
                    let clipped = x.clamp(*lower, *upper);
                    if clipped != *x {
                        corrections.push(Correction::Clipped {
                            param: name.clone(),
                            from: *x,
                            to: clipped,
                        });
                    }
                    out.insert(name.clone(), Value::Num(clipped));
                }
                (ParamKind::Categorical { options }, Value::Cat(s)) => {
                    let trimmed = s.trim();
                    if !options.iter().any(|o| o == trimmed) {
                        return Err(SpaceError::UnknownOption {
                            param: name.clone(),
                            value: s.clone(),
                        });
                    }
                    if trimmed != s {
                        corrections.push(Correction::Trimmed {
                            param: name.clone(),
                            from: s.clone(),
                        });
                    }
                    out.insert(name.clone(), Value::Cat(trimmed.to_string()));
                }
                (ParamKind::Numeric { .. }, Value::Cat(_)) => {
                    return Err(SpaceError::KindMismatch {
                        param: name.clone(),
                        expected: "numeric",
                    })
                }
                (ParamKind::Categorical { .. }, Value::Num(_)) => {
                    return Err(SpaceError::KindMismatch {
                        param: name.clone(),
                        expected: "categorical",
                    })
                }
            }
        }
        Ok(ValidatedDesign {
            design: out,
            corrections,
        })
    }

    /// Encodes with the default imputation (0.5 for missing numerics).
    pub fn encode(&self, design: &Design) -> EncodedDesign {
        self.encode_with(design, Imputation::default())
    }

    /// Encodes a validated design. Missing numerics take the imputation
    /// value, missing categoricals an all-zero block, and unknown options
    /// (which validation rules out) are also encoded as all-zero.
    pub fn encode_with(&self, design: &Design, imputation: Imputation<'_>) -> EncodedDesign {
        let mut v = Vec::with_capacity(self.encoded_len());
        let mut numeric_index = 0;
        for spec in &self.params {
            match &spec.kind {
                ParamKind::Numeric { lower, upper } => {
                    let x = match design.get(&spec.name).and_then(Value::as_num) {
                        Some(x) => (x - lower) / (upper - lower),
                        None => match imputation {
                            Imputation::Constant(c) => c,
                            Imputation::PerNumeric(values) => values[numeric_index],
                        },
                    };
                    v.push(x);
                    numeric_index += 1;
                }
                ParamKind::Categorical { options } => {
                    let chosen = design.get(&spec.name).and_then(Value::as_cat);
                    v.extend(options.iter().map(|o| {
                        if Some(o.as_str()) == chosen {
                            1.0
                        } else {
                            0.0
                        }
                    }));
                }
            }
        }
        EncodedDesign(v)
    }

    /// Numerics uniform in range, categoricals uniform over options.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Design {
        let mut d = Design::new();
        for spec in &self.params {
            let value = match &spec.kind {
                ParamKind::Numeric { lower, upper } => {
                    Value::Num(lower + (upper - lower) * rng.random::<f64>())
                }
                ParamKind::Categorical { options } => {
                    Value::Cat(options[rng.random_range(0..options.len())].clone())
                }
            };
            d.insert(spec.name.clone(), value);
        }
        d
    }

    /// Renames every parameter and option while keeping kinds, bounds and
    /// cardinalities. Numerics become `X1, X2, ...` and categoricals
    /// `C1, C2, ...` in declaration order; options become `A, B, ...`
    /// (continuing `AA, AB, ...` past 26). Units are dropped.
    pub fn mask(&self) -> (ParameterSpace, NameMap) {
        let mut params = Vec::with_capacity(self.params.len());
        let mut entries = Vec::with_capacity(self.params.len());
        let (mut numeric, mut categorical) = (0, 0);
        for spec in &self.params {
            match &spec.kind {
                ParamKind::Numeric { lower, upper } => {
                    numeric += 1;
                    let masked = format!("X{numeric}");
                    params.push(ParameterSpec {
                        name: masked.clone(),
                        kind: ParamKind::Numeric {
                            lower: *lower,
                            upper: *upper,
                        },
                        unit: None,
                    });
                    entries.push(MaskEntry {
                        original: spec.name.clone(),
                        masked,
                        options: Vec::new(),
                    });
                }
                ParamKind::Categorical { options } => {
                    categorical += 1;
                    let masked = format!("C{categorical}");
                    let labels: Vec<String> = (0..options.len()).map(option_label).collect();
                    params.push(ParameterSpec {
                        name: masked.clone(),
                        kind: ParamKind::Categorical {
                            options: labels.clone(),
                        },
                        unit: None,
                    });
                    entries.push(MaskEntry {
                        original: spec.name.clone(),
                        masked,
                        options: options.iter().cloned().zip(labels).collect(),
                    });
                }
            }
        }
        let masked_space = ParameterSpace {
            name: String::new(),
            params,
        };
        (masked_space, NameMap { entries })
    }
}

/// Spreadsheet-style option label: 0 -> A, 25 -> Z, 26 -> AA, ...
pub fn option_label(index: usize) -> String {
    let mut n = index + 1;
    let mut chars = Vec::new();
    while n > 0 {
        let rem = (n - 1) % 26;
        chars.push(char::from(b'A' + rem as u8));
        n = (n - 1) / 26;
    }
    chars.iter().rev().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaskEntry {
    original: String,
    masked: String,
    /// (original option, masked label), empty for numerics.
    options: Vec<(String, String)>,
}

/// Invertible mapping between a space and its masked counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameMap {
    entries: Vec<MaskEntry>,
}

impl NameMap {
    pub fn masked_name(&self, original: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.original == original)
            .map(|e| e.masked.as_str())
    }

    pub fn original_name(&self, masked: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.masked == masked)
            .map(|e| e.original.as_str())
    }

    /// Translates an original-space design into masked names and labels.
    pub fn mask_design(&self, design: &Design) -> Result<Design, SpaceError> {
        self.translate(design, true)
    }

    /// Translates a masked-space design back to original names and options.
    pub fn unmask_design(&self, design: &Design) -> Result<Design, SpaceError> {
        self.translate(design, false)
    }

    fn translate(&self, design: &Design, forward: bool) -> Result<Design, SpaceError> {
        let mut out = Design::new();
        for (name, value) in design.iter() {
            let entry = self
                .entries
                .iter()
                .find(|e| {
                    if forward {
                        &e.original == name
                    } else {
                        &e.masked == name
                    }
                })
                .ok_or_else(|| SpaceError::UnknownParameter(name.clone()))?;
            let target = if forward {
                &entry.masked
            } else {
                &entry.original
            };
            let value = match value {
                Value::Num(x) => {
                    if !entry.options.is_empty() {
                        return Err(SpaceError::KindMismatch {
                            param: name.clone(),
                            expected: "categorical",
                        });
                    }
                    Value::Num(*x)
                }
                Value::Cat(s) => {
                    if entry.options.is_empty() {
                        return Err(SpaceError::KindMismatch {
                            param: name.clone(),
                            expected: "numeric",
                        });
                    }
                    let trimmed = s.trim();
                    let mapped = entry
                        .options
                        .iter()
                        .find(|(orig, label)| {
                            if forward {
                                orig == trimmed
                            } else {
                                label == trimmed
                            }
                        })
                        .map(|(orig, label)| if forward { label } else { orig })
                        .ok_or_else(|| SpaceError::UnknownOption {
                            param: name.clone(),
                            value: s.clone(),
                        })?;
                    Value::Cat(mapped.clone())
                }
            };
            out.insert(target.clone(), value);
        }
        Ok(out)
    }
}
