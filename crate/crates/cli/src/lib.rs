//! Command-line front end and JSON-over-HTTP service for the counterfactual
//! engine. Both go through [`explain`] so they report identical results.

pub mod cli;
pub mod server;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use cfopt::builder::{generate, BuildError, CeConfig, CeResult};
use cfopt::data::{Dataset, DataError, FeatureSchema, Labels, Record};
use cfopt::evaluate::{resolve_target, score_set, MetricsReport};
use cfopt::learners::TrainedModel;

/// A factual chosen by training-row index or given inline as a JSON object
/// keyed by feature name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Instance {
    Row(usize),
    Inline(Value),
}

impl Instance {
    pub fn resolve(&self, ds: &Dataset) -> Result<Record, DataError> {
        match self {
            Instance::Row(i) => ds
                .rows
                .get(*i)
                .cloned()
                .ok_or_else(|| DataError::Schema(format!("row {i} out of range (dataset has {} rows)", ds.len()))),
            Instance::Inline(v) => ds.schema.record_from_json(v),
        }
    }
}

/// Counterfactuals for one factual plus their metrics. `degraded` is set
/// when a returned counterfactual fails the model's own prediction check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub result: CeResult,
    pub metrics: MetricsReport,
    pub degraded: bool,
}

pub fn explain(model: &TrainedModel, ds: &Dataset, factual: &Record, config: &CeConfig) -> Result<Explanation, BuildError> {
    let result = generate(factual, model, ds, config)?;
    let internal = |e: cfopt::evaluate::EvalError| BuildError::Internal(e.to_string());
    // Metrics judge validity at the decision rule itself, without the margin.
    let target = resolve_target(&ds.schema, model, &config.target).map_err(internal)?;
    let ces: Vec<Record> = result.counterfactuals.iter().map(|c| c.record.clone()).collect();
    let metrics = score_set(factual, &ces, model, &ds.schema, target).map_err(internal)?;
    let degraded = metrics.validity < 1.0;
    Ok(Explanation { result, metrics, degraded })
}

/// Label of row `i` as a JSON value: the level name for classification.
pub fn label_json(schema: &FeatureSchema, labels: &Labels, i: usize) -> Value {
    match labels {
        Labels::Class(v) => match schema.label_levels() {
            Some(levels) => Value::String(levels[v[i]].clone()),
            None => Value::from(v[i]),
        },
        Labels::Real(v) => Value::from(v[i]),
    }
}
