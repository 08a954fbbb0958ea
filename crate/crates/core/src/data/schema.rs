//! Feature schema: per-feature kind, bounds, actionability and the encoded
//! column layout derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DataError;

/// Threshold (in scaled units) above which a numeric feature counts as changed.
pub const CHANGE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Continuous,
    Integer,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actionability {
    Free,
    Immutable,
    NonDecreasing,
    NonIncreasing,
    NonNegative,
    /// Categorical only: moves restricted by the feature's `allowed_transitions`.
    Conditional,
}

impl fmt::Display for Actionability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Actionability::Free => "free",
            Actionability::Immutable => "immutable",
            Actionability::NonDecreasing => "non-decreasing",
            Actionability::NonIncreasing => "non-increasing",
            Actionability::NonNegative => "non-negative",
            Actionability::Conditional => "conditional",
        };
        f.write_str(s)
    }
}

fn default_upper() -> f64 {
    1.0
}

fn default_actionability() -> Actionability {
    Actionability::Free
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    #[serde(default)]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    #[serde(default = "default_actionability")]
    pub actionability: Actionability,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub allowed_transitions: BTreeMap<String, Vec<String>>,
}

impl FeatureSpec {
    pub fn continuous(name: &str, lower: f64, upper: f64) -> Self {
        Self::numeric(name, FeatureKind::Continuous, lower, upper)
    }

    pub fn integer(name: &str, lower: f64, upper: f64) -> Self {
        Self::numeric(name, FeatureKind::Integer, lower, upper)
    }

    fn numeric(name: &str, kind: FeatureKind, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            levels: Vec::new(),
            lower,
            upper,
            actionability: Actionability::Free,
            allowed_transitions: BTreeMap::new(),
        }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            levels: levels.iter().map(|s| s.to_string()).collect(),
            lower: 0.0,
            upper: 1.0,
            actionability: Actionability::Free,
            allowed_transitions: BTreeMap::new(),
        }
    }

    pub fn with_actionability(mut self, a: Actionability) -> Self {
        self.actionability = a;
        self
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }

    /// Width of the numeric range in original units.
    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn scale(&self, v: f64) -> f64 {
        let w = self.range();
        if w > 0.0 {
            (v - self.lower) / w
        } else {
            0.0
        }
    }

    pub fn unscale(&self, u: f64) -> f64 {
        self.lower + u * self.range()
    }
}

/// One encoded column: a scaled numeric feature or one level of a one-hot group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub feature: usize,
    pub level: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSchema {
    features: Vec<FeatureSpec>,
    label_column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label_levels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema", into = "RawSchema")]
pub struct FeatureSchema {
    features: Vec<FeatureSpec>,
    label_column: String,
    label_levels: Option<Vec<String>>,
    columns: Vec<Column>,
    offsets: Vec<usize>,
}

impl TryFrom<RawSchema> for FeatureSchema {
    type Error = DataError;

    fn try_from(raw: RawSchema) -> Result<Self, DataError> {
        FeatureSchema::new(raw.features, &raw.label_column, raw.label_levels)
    }
}

impl From<FeatureSchema> for RawSchema {
    fn from(s: FeatureSchema) -> Self {
        RawSchema {
            features: s.features,
            label_column: s.label_column,
            label_levels: s.label_levels,
        }
    }
}

impl FeatureSchema {
    /// Validates the feature list and derives the encoded column layout.
    pub fn new(
        features: Vec<FeatureSpec>,
        label_column: &str,
        label_levels: Option<Vec<String>>,
    ) -> Result<Self, DataError> {
        let mut names = BTreeSet::new();
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(DataError::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if f.name == label_column {
                return Err(DataError::Schema(format!(
                    "feature `{}` collides with the label column",
                    f.name
                )));
            }
            match f.kind {
                FeatureKind::Categorical => {
                    if f.levels.is_empty() {
                        return Err(DataError::Schema(format!("`{}` has no levels", f.name)));
                    }
                    let uniq: BTreeSet<_> = f.levels.iter().collect();
                    if uniq.len() != f.levels.len() {
                        return Err(DataError::Schema(format!(
                            "`{}` has duplicate levels",
                            f.name
                        )));
                    }
                    for (from, tos) in &f.allowed_transitions {
                        for l in std::iter::once(from).chain(tos) {
                            if f.level_index(l).is_none() {
                                return Err(DataError::Schema(format!(
                                    "`{}` transition mentions unknown level `{l}`",
                                    f.name
                                )));
                            }
                        }
                    }
                }
                FeatureKind::Continuous | FeatureKind::Integer => {
                    if !(f.lower.is_finite() && f.upper.is_finite()) || f.lower > f.upper {
                        return Err(DataError::Schema(format!(
                            "`{}` needs finite bounds with lower <= upper",
                            f.name
                        )));
                    }
                    if f.actionability == Actionability::Conditional {
                        return Err(DataError::Schema(format!(
                            "`{}`: conditional actionability applies to categorical features only",
                            f.name
                        )));
                    }
                }
            }
        }
        if let Some(levels) = &label_levels {
            if levels.len() != 2 {
                return Err(DataError::Schema(
                    "label_levels must list exactly two classes (negative, positive)".into(),
                ));
            }
        }
        let mut columns = Vec::new();
        let mut offsets = Vec::with_capacity(features.len() + 1);
        for (j, f) in features.iter().enumerate() {
            offsets.push(columns.len());
            if f.is_categorical() {
                columns.extend((0..f.levels.len()).map(|l| Column { feature: j, level: Some(l) }));
            } else {
                columns.push(Column { feature: j, level: None });
            }
        }
        offsets.push(columns.len());
        Ok(Self {
            features,
            label_column: label_column.to_string(),
            label_levels,
            columns,
            offsets,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        serde_json::from_str(text).map_err(|e| DataError::Schema(e.to_string()))
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, j: usize) -> &FeatureSpec {
        &self.features[j]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn label_levels(&self) -> Option<&[String]> {
        self.label_levels.as_deref()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Number of encoded columns `n`.
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Encoded columns belonging to feature `j` (the one-hot group `C_j` for categoricals).
    pub fn feature_columns(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn column_name(&self, c: usize) -> String {
        let col = self.columns[c];
        let f = &self.features[col.feature];
        match col.level {
            Some(l) => format!("{}={}", f.name, f.levels[l]),
            None => f.name.clone(),
        }
    }

    /// Encodes a record: one-hot expansion plus min-max scaling against the
    /// schema bounds. Out-of-range numerics are clipped and reported.
    pub fn encode(&self, record: &Record) -> Result<Encoded, DataError> {
        if record.0.len() != self.features.len() {
            return Err(DataError::Arity { expected: self.features.len(), got: record.0.len() });
        }
        let mut values = vec![0.0; self.n_columns()];
        let mut clipped = Vec::new();
        for (j, (f, v)) in self.features.iter().zip(&record.0).enumerate() {
            let cols = self.feature_columns(j);
            match (f.kind, v) {
                (FeatureKind::Categorical, FeatureValue::Level(level)) => {
                    let idx = f.level_index(level).ok_or_else(|| DataError::UnknownLevel {
                        feature: f.name.clone(),
                        level: level.clone(),
                    })?;
                    values[cols.start + idx] = 1.0;
                }
                (FeatureKind::Continuous | FeatureKind::Integer, FeatureValue::Number(x)) => {
                    if !x.is_finite() {
                        return Err(DataError::NotNumeric {
                            feature: f.name.clone(),
                            token: x.to_string(),
                        });
                    }
                    let mut x = *x;
                    if x < f.lower || x > f.upper {
                        clipped.push(j);
                        x = x.clamp(f.lower, f.upper);
                    }
                    values[cols.start] = f.scale(x);
                }
                (FeatureKind::Categorical, FeatureValue::Number(x)) => {
                    return Err(DataError::UnknownLevel { feature: f.name.clone(), level: x.to_string() })
                }
                (_, FeatureValue::Level(s)) => {
                    return Err(DataError::NotNumeric { feature: f.name.clone(), token: s.clone() })
                }
            }
        }
        Ok(Encoded { values, clipped })
    }

    /// Maps an encoded vector back to original units. Integer features are
    /// rounded; residuals above 1e-6 (original units) are reported.
    pub fn decode(&self, v: &[f64]) -> Result<Decoded, DataError> {
        if v.len() != self.n_columns() {
            return Err(DataError::Arity { expected: self.n_columns(), got: v.len() });
        }
        let mut out = Vec::with_capacity(self.features.len());
        let mut integer_residuals = Vec::new();
        for (j, f) in self.features.iter().enumerate() {
            let cols = self.feature_columns(j);
            match f.kind {
                FeatureKind::Categorical => {
                    let group = &v[cols];
                    let sum: f64 = group.iter().sum();
                    let (best, &max) = group
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .expect("non-empty one-hot group");
                    let unique = group.iter().enumerate().all(|(k, &g)| k == best || g < 1.0 - 1e-6);
                    if (sum - 1.0).abs() > 1e-6 || max < 1.0 - 1e-6 || !unique {
                        return Err(DataError::Incoherent {
                            feature: f.name.clone(),
                            group: group.to_vec(),
                        });
                    }
                    out.push(FeatureValue::Level(f.levels[best].clone()));
                }
                FeatureKind::Continuous => out.push(FeatureValue::Number(f.unscale(v[cols.start]))),
                FeatureKind::Integer => {
                    let raw = f.unscale(v[cols.start]);
                    let rounded = raw.round();
                    if (raw - rounded).abs() > 1e-6 {
                        integer_residuals.push((j, raw - rounded));
                    }
                    out.push(FeatureValue::Number(rounded));
                }
            }
        }
        Ok(Decoded { record: Record(out), integer_residuals })
    }

    /// Per-feature change flags between two records: level change for
    /// categoricals, more than [`CHANGE_TOL`] in scaled units for numerics.
    pub fn changed_features(&self, a: &Record, b: &Record) -> Vec<bool> {
        self.features
            .iter()
            .zip(a.0.iter().zip(&b.0))
            .map(|(f, (x, y))| match (x, y) {
                (FeatureValue::Number(x), FeatureValue::Number(y)) => {
                    (f.scale(*x) - f.scale(*y)).abs() > CHANGE_TOL
                }
                (x, y) => x != y,
            })
            .collect()
    }

    /// Renders a record as a JSON object keyed by feature name.
    pub fn record_to_json(&self, r: &Record) -> serde_json::Value {
        let map = self
            .features
            .iter()
            .zip(&r.0)
            .map(|(f, v)| (f.name.clone(), serde_json::to_value(v).expect("plain value")))
            .collect();
        serde_json::Value::Object(map)
    }

    /// Parses a JSON object keyed by feature name. Missing features are an error.
    pub fn record_from_json(&self, v: &serde_json::Value) -> Result<Record, DataError> {
        let obj = v
            .as_object()
            .ok_or_else(|| DataError::Schema("record must be a JSON object".into()))?;
        let mut out = Vec::with_capacity(self.features.len());
        for f in &self.features {
            let raw = obj.get(&f.name).ok_or_else(|| DataError::MissingColumn(f.name.clone()))?;
            let value = match (f.kind, raw) {
                (FeatureKind::Categorical, serde_json::Value::String(s)) => {
                    if f.level_index(s).is_none() {
                        return Err(DataError::UnknownLevel { feature: f.name.clone(), level: s.clone() });
                    }
                    FeatureValue::Level(s.clone())
                }
                (FeatureKind::Categorical, other) => {
                    return Err(DataError::UnknownLevel { feature: f.name.clone(), level: other.to_string() })
                }
                (_, serde_json::Value::Number(n)) => FeatureValue::Number(n.as_f64().unwrap_or(f64::NAN)),
                (_, other) => {
                    return Err(DataError::NotNumeric { feature: f.name.clone(), token: other.to_string() })
                }
            };
            out.push(value);
        }
        Ok(Record(out))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Level(String),
}

impl FeatureValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(x) => Some(*x),
            FeatureValue::Level(_) => None,
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Two decimals with trailing zeros dropped, so solver round-off
            // near an integer prints like the integer.
            FeatureValue::Number(x) => {
                let s = format!("{x:.2}");
                let s = s.trim_end_matches('0').trim_end_matches('.');
                f.write_str(if s == "-0" { "0" } else { s })
            }
            FeatureValue::Level(s) => f.write_str(s),
        }
    }
}

/// A record in original feature space, ordered like the schema's features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record(pub Vec<FeatureValue>);

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub values: Vec<f64>,
    /// Features whose value was clipped into the schema bounds.
    pub clipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub record: Record,
    /// `(feature, residual)` for integer features that were not integral.
    pub integer_residuals: Vec<(usize, f64)>,
}
