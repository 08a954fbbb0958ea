//! Staged demonstration pipelines on the bundled German Credit and Heart
//! fixtures. Each part is a JSON config adding one criterion to the previous
//! one, so the staged tables regenerate from config diffs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{generate, BuildError, CausalRelation, CeConfig, CeResult, Mechanism, Target};
use crate::data::{DataError, Dataset, FeatureSchema};
use crate::evaluate::{resolve_target, score_set, EvalError, MetricsReport};
use crate::learners::{cross_validate, train, train_on, Family, Hyperparams, Task, TrainError, TrainedModel};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("unknown demo `{0}` (expected german-credit or heart)")]
    Unknown(String),
    #[error("part definition: {0}")]
    Part(String),
    #[error("no row is predicted away from the target `{0}`")]
    NoFactual(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemoName {
    GermanCredit,
    Heart,
}

impl FromStr for DemoName {
    type Err = DemoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "german-credit" | "german" => Ok(DemoName::GermanCredit),
            "heart" => Ok(DemoName::Heart),
            other => Err(DemoError::Unknown(other.to_string())),
        }
    }
}

impl fmt::Display for DemoName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemoName::GermanCredit => "german-credit",
            DemoName::Heart => "heart",
        })
    }
}

/// A causal relation whose mechanism is fitted when the part is resolved:
/// an MLP regressor from the scaled parents to the scaled endogenous
/// feature, its hidden layout picked by k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedRelation {
    pub endogenous: String,
    pub parents: Vec<String>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Candidate hidden layouts.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<Vec<usize>>,
}

fn default_folds() -> usize {
    5
}

fn default_hidden() -> Vec<Vec<usize>> {
    vec![vec![8]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub label: String,
    /// Active criteria, for display.
    pub criteria: String,
    pub config: CeConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub learned_causality: Vec<LearnedRelation>,
}

const GERMAN_CSV: &str = include_str!("../../fixtures/german_credit.csv");
const GERMAN_SCHEMA: &str = include_str!("../../fixtures/german_credit.schema.json");
const HEART_CSV: &str = include_str!("../../fixtures/heart.csv");
const HEART_SCHEMA: &str = include_str!("../../fixtures/heart.schema.json");

const GERMAN_PARTS: [&str; 6] = [
    include_str!("../../demos/german-credit/part-a.json"),
    include_str!("../../demos/german-credit/part-b.json"),
    include_str!("../../demos/german-credit/part-c.json"),
    include_str!("../../demos/german-credit/part-d.json"),
    include_str!("../../demos/german-credit/part-e.json"),
    include_str!("../../demos/german-credit/part-f.json"),
];
const HEART_PARTS: [&str; 5] = [
    include_str!("../../demos/heart/part-a.json"),
    include_str!("../../demos/heart/part-b.json"),
    include_str!("../../demos/heart/part-c.json"),
    include_str!("../../demos/heart/part-d.json"),
    include_str!("../../demos/heart/part-e.json"),
];

/// Bundled fixture schema and CSV text.
pub fn fixture(name: DemoName) -> (&'static str, &'static str) {
    match name {
        DemoName::GermanCredit => (GERMAN_SCHEMA, GERMAN_CSV),
        DemoName::Heart => (HEART_SCHEMA, HEART_CSV),
    }
}

pub fn dataset(name: DemoName) -> Result<Dataset, DemoError> {
    let (schema, csv) = fixture(name);
    let schema = FeatureSchema::from_json(schema)?;
    Ok(Dataset::from_csv_str(csv, &schema)?)
}

/// Model family and hyperparameters each demo explains.
pub fn model_setup(name: DemoName) -> (Family, Hyperparams) {
    match name {
        DemoName::GermanCredit => (Family::Svm, Hyperparams::default()),
        DemoName::Heart => (Family::Mlp, Hyperparams { hidden: vec![10], ..Hyperparams::default() }),
    }
}

pub fn parts(name: DemoName) -> Result<Vec<PartSpec>, DemoError> {
    let texts: &[&str] = match name {
        DemoName::GermanCredit => &GERMAN_PARTS,
        DemoName::Heart => &HEART_PARTS,
    };
    texts
        .iter()
        .map(|t| {
            let p: PartSpec = serde_json::from_str(t).map_err(|e| DemoError::Part(e.to_string()))?;
            p.config.validate()?;
            Ok(p)
        })
        .collect()
}

/// A loaded demo: fixture, trained model and part definitions.
#[derive(Debug, Clone)]
pub struct Demo {
    pub name: DemoName,
    pub dataset: Dataset,
    pub model: TrainedModel,
    pub parts: Vec<PartSpec>,
    /// Per part, the config actually solved: learned mechanisms fitted.
    pub configs: Vec<CeConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartOutcome {
    pub label: String,
    pub criteria: String,
    /// The config actually solved, learned mechanisms included.
    pub config: CeConfig,
    pub result: Option<CeResult>,
    pub metrics: Option<MetricsReport>,
    /// Why the part produced no counterfactuals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Demo {
    pub fn load(name: DemoName) -> Result<Self, DemoError> {
        let dataset = dataset(name)?;
        let (family, hp) = model_setup(name);
        let model = train_on(&dataset, family, &hp, 0)?;
        let parts = parts(name)?;
        let configs = parts.iter().map(|p| resolve(&dataset, p)).collect::<Result<_, _>>()?;
        Ok(Demo { name, dataset, model, parts, configs })
    }

    /// Target label shared by all parts.
    pub fn target(&self) -> &Target {
        &self.parts[0].config.target
    }

    /// Rows whose predicted class differs from the target, in dataset order.
    pub fn factual_rows(&self, count: usize) -> Result<Vec<usize>, DemoError> {
        let target = resolve_target(&self.dataset.schema, &self.model, self.target())?;
        let rows: Vec<usize> = (0..self.dataset.len())
            .filter(|&i| {
                let s = self.model.score(&self.dataset.encoded[i]).unwrap_or(f64::NAN);
                !crate::builder::satisfies(&self.model, target, s)
            })
            .take(count)
            .collect();
        if rows.is_empty() {
            return Err(DemoError::NoFactual(format!("{:?}", self.target())));
        }
        Ok(rows)
    }

    /// The demo's factual: the first row predicted away from the target for
    /// which the last (most constrained) part has a counterfactual.
    pub fn factual_row(&self) -> Result<usize, DemoError> {
        let last = self.configs.last().expect("demo has parts");
        for row in self.factual_rows(self.dataset.len())? {
            if generate(&self.dataset.rows[row], &self.model, &self.dataset, last).is_ok() {
                return Ok(row);
            }
        }
        Err(DemoError::NoFactual(format!("{:?}", self.target())))
    }

    /// Solves every part for one factual row. Failures are reported per part.
    pub fn run(&self, row: usize) -> Result<Vec<PartOutcome>, DemoError> {
        let factual = &self.dataset.rows[row];
        let target = resolve_target(&self.dataset.schema, &self.model, self.target())?;
        let mut out = Vec::with_capacity(self.parts.len());
        for (part, config) in self.parts.iter().zip(&self.configs) {
            let config = config.clone();
            let (result, metrics, error) = match generate(factual, &self.model, &self.dataset, &config) {
                Ok(r) => {
                    let ces: Vec<_> = r.counterfactuals.iter().map(|c| c.record.clone()).collect();
                    let m = score_set(factual, &ces, &self.model, &self.dataset.schema, target)?;
                    (Some(r), Some(m), None)
                }
                Err(e) => (None, None, Some(e.to_string())),
            };
            out.push(PartOutcome { label: part.label.clone(), criteria: part.criteria.clone(), config, result, metrics, error });
        }
        Ok(out)
    }
}

/// The part's config with learned mechanisms fitted on the fixture.
pub fn resolve(ds: &Dataset, part: &PartSpec) -> Result<CeConfig, DemoError> {
    let mut cfg = part.config.clone();
    for rel in &part.learned_causality {
        let model = learn_mechanism(ds, rel)?;
        cfg.causality.push(CausalRelation {
            endogenous: rel.endogenous.clone(),
            parents: rel.parents.clone(),
            mechanism: Mechanism::Learned { model: Box::new(model) },
        });
    }
    Ok(cfg)
}

/// Fits a relation's mechanism on the scaled fixture columns.
pub fn learn_mechanism(ds: &Dataset, rel: &LearnedRelation) -> Result<TrainedModel, DemoError> {
    let schema = &ds.schema;
    let col = |name: &str| -> Result<usize, DemoError> {
        let j = schema.feature_index(name).ok_or_else(|| DemoError::Part(format!("unknown feature `{name}`")))?;
        if schema.feature(j).is_categorical() {
            return Err(DemoError::Part(format!("`{name}` must be numeric")));
        }
        Ok(schema.feature_columns(j).start)
    };
    let e = col(&rel.endogenous)?;
    let ps: Vec<usize> = rel.parents.iter().map(|p| col(p)).collect::<Result<_, _>>()?;
    let xs: Vec<Vec<f64>> = ds.encoded.iter().map(|r| ps.iter().map(|&c| r[c]).collect()).collect();
    let ys: Vec<f64> = ds.encoded.iter().map(|r| r[e]).collect();
    let candidates: Vec<Hyperparams> = rel
        .hidden
        .iter()
        .map(|h| Hyperparams { hidden: h.clone(), learning_rate: 0.05, epochs: 300, ..Hyperparams::default() })
        .collect();
    if candidates.is_empty() {
        return Err(DemoError::Part("learned relation needs at least one hidden layout".into()));
    }
    let (best, _) = cross_validate(&xs, &ys, Family::Mlp, Task::Regression, &candidates, rel.folds, 0)?;
    Ok(train(&xs, &ys, Family::Mlp, Task::Regression, &candidates[best], 0)?)
}
