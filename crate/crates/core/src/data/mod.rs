//! Tabular data: schema, CSV ingestion, one-hot encoding and min-max scaling.
//!
//! All optimization happens in the encoded space: numeric features are
//! scaled to `[0, 1]` against their schema bounds and categorical features
//! are expanded into one-hot groups. Reporting goes back through
//! [`FeatureSchema::decode`].

mod schema;

use std::path::Path;

use thiserror::Error;

pub use schema::{
    Actionability, Column, Decoded, Encoded, FeatureKind, FeatureSchema, FeatureSpec, FeatureValue,
    Record, CHANGE_TOL,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}, column `{column}`: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("unknown level `{level}` for feature `{feature}`")]
    UnknownLevel { feature: String, level: String },
    #[error("non-numeric value `{token}` for feature `{feature}`")]
    NotNumeric { feature: String, token: String },
    #[error("expected {expected} values, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("incoherent one-hot group for `{feature}`: {group:?}")]
    Incoherent { feature: String, group: Vec<f64> },
    #[error("no rows with label `{0}`")]
    EmptyClass(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// Class indices into the schema's `label_levels`.
    Class(Vec<usize>),
    Real(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Class(v) => v.len(),
            Labels::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels as training targets: class index as 0.0/1.0, or the real value.
    pub fn targets(&self) -> Vec<f64> {
        match self {
            Labels::Class(v) => v.iter().map(|&c| c as f64).collect(),
            Labels::Real(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub rows: Vec<Record>,
    pub labels: Labels,
    /// `N x n` encoded and scaled matrix, row-major.
    pub encoded: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from already-parsed records, validating each against the schema.
    pub fn from_records(schema: FeatureSchema, rows: Vec<Record>, labels: Labels) -> Result<Self, DataError> {
        if rows.len() != labels.len() {
            return Err(DataError::Arity { expected: rows.len(), got: labels.len() });
        }
        let mut encoded = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let e = schema.encode(r)?;
            if let Some(&j) = e.clipped.first() {
                let f = schema.feature(j);
                return Err(DataError::Parse {
                    row: i + 1,
                    column: f.name.clone(),
                    message: format!("value outside [{}, {}]", f.lower, f.upper),
                });
            }
            encoded.push(e.values);
        }
        Ok(Self { schema, rows, labels, encoded })
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, schema)
    }

    /// Parses CSV text (comma separated, header row, `.` decimal point).
    pub fn from_csv_str(text: &str, schema: &FeatureSchema) -> Result<Self, DataError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let position = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| DataError::MissingColumn(name.to_string()))
        };
        let feature_cols = schema
            .features()
            .iter()
            .map(|f| position(&f.name))
            .collect::<Result<Vec<_>, _>>()?;
        let label_col = position(schema.label_column())?;

        let mut rows = Vec::new();
        let mut classes = Vec::new();
        let mut reals = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let mut values = Vec::with_capacity(feature_cols.len());
            for (f, &c) in schema.features().iter().zip(&feature_cols) {
                let token = rec.get(c).unwrap_or("").trim();
                let err = |message: String| DataError::Parse { row, column: f.name.clone(), message };
                let v = match f.kind {
                    FeatureKind::Categorical => {
                        if f.level_index(token).is_none() {
                            return Err(err(format!("unknown level `{token}`")));
                        }
                        FeatureValue::Level(token.to_string())
                    }
                    FeatureKind::Continuous | FeatureKind::Integer => {
                        let x: f64 = token
                            .parse()
                            .map_err(|_| err(format!("non-numeric token `{token}`")))?;
                        if !x.is_finite() {
                            return Err(err(format!("non-finite value `{token}`")));
                        }
                        if f.kind == FeatureKind::Integer && (x - x.round()).abs() > 1e-9 {
                            return Err(err(format!("non-integer value `{token}`")));
                        }
                        FeatureValue::Number(x)
                    }
                };
                values.push(v);
            }
            let token = rec.get(label_col).unwrap_or("").trim();
            match schema.label_levels() {
                Some(levels) => {
                    let c = levels.iter().position(|l| l == token).ok_or_else(|| DataError::Parse {
                        row,
                        column: schema.label_column().to_string(),
                        message: format!("unknown label `{token}`"),
                    })?;
                    classes.push(c);
                }
                None => reals.push(token.parse::<f64>().map_err(|_| DataError::Parse {
                    row,
                    column: schema.label_column().to_string(),
                    message: format!("non-numeric target `{token}`"),
                })?),
            }
            rows.push(Record(values));
        }
        let labels = if schema.label_levels().is_some() { Labels::Class(classes) } else { Labels::Real(reals) };
        Self::from_records(schema.clone(), rows, labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_columns(&self) -> usize {
        self.schema.n_columns()
    }

    /// Resolves a class label (level name) to its index.
    pub fn class_of(&self, label: &str) -> Result<usize, DataError> {
        self.schema
            .label_levels()
            .and_then(|l| l.iter().position(|x| x == label))
            .ok_or_else(|| DataError::UnknownLabel(label.to_string()))
    }

    /// Indices of rows whose label equals `class` (the set `I` of the manifold constraints).
    pub fn class_indices(&self, class: usize) -> Result<Vec<usize>, DataError> {
        let name = || {
            self.schema
                .label_levels()
                .and_then(|l| l.get(class).cloned())
                .unwrap_or_else(|| class.to_string())
        };
        let Labels::Class(labels) = &self.labels else {
            return Err(DataError::UnknownLabel(name()));
        };
        let idx: Vec<usize> = labels.iter().enumerate().filter(|(_, &c)| c == class).map(|(i, _)| i).collect();
        if idx.is_empty() {
            return Err(DataError::EmptyClass(name()));
        }
        Ok(idx)
    }
}
