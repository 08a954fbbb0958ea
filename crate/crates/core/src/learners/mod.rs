//! Predictive model families that admit an exact mixed-integer encoding:
//! linear scores, CART trees, tree ensembles and ReLU networks.
//!
//! Decision rules for classification are fixed per family: linear models and
//! networks predict the positive class when the score is `>= 0`; trees and
//! ensembles score the positive-class fraction and predict positive when it
//! is `>= 0.5`.

mod linear;
mod mlp;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;

pub use linear::{LinearLoss, LinearModel};
pub use mlp::{Layer, ReluNet};
pub use tree::{Ensemble, LeafPath, Node, Tree};

/// Current model file format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("invalid hyperparameter: {0}")]
    Hyperparams(String),
    #[error("classification needs both classes present in the training labels")]
    SingleClass,
    #[error("training set is empty")]
    Empty,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: model expects {expected} inputs, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("unsupported model file version {0}")]
    Version(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_finite(loss: f64, epoch: usize) -> Result<(), TrainError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Divergence { epoch })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Lr,
    Svm,
    Cart,
    Rf,
    Mlp,
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lr" => Ok(Family::Lr),
            "svm" => Ok(Family::Svm),
            "cart" => Ok(Family::Cart),
            "rf" => Ok(Family::Rf),
            "mlp" => Ok(Family::Mlp),
            other => Err(format!("unknown model family `{other}` (lr, svm, cart, rf, mlp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty; the SVM regularization strength.
    pub l2: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub n_trees: usize,
    pub bootstrap: bool,
    /// Features considered per split; `None` means all.
    pub max_features: Option<usize>,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            epochs: 500,
            learning_rate: 0.5,
            l2: 1e-3,
            max_depth: 4,
            min_samples_leaf: 1,
            n_trees: 5,
            bootstrap: true,
            max_features: None,
            hidden: vec![10],
            batch_size: 16,
        }
    }
}

impl Hyperparams {
    fn validate(&self, family: Family) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Hyperparams(m.to_string()));
        match family {
            Family::Lr | Family::Svm | Family::Mlp if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) => {
                bad("learning rate must be positive")
            }
            Family::Svm if self.l2 < 0.0 => bad("l2 must be non-negative"),
            Family::Cart | Family::Rf if self.max_depth < 1 => bad("tree max depth must be >= 1"),
            Family::Rf if self.n_trees < 1 => bad("forest needs at least one tree"),
            Family::Mlp if self.hidden.iter().any(|&w| w < 1) => bad("hidden layer width must be >= 1"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Model {
    Linear(LinearModel),
    Tree(Tree),
    Ensemble(Ensemble),
    ReluNet(ReluNet),
}

impl Model {
    pub fn family_name(&self) -> &'static str {
        match self {
            Model::Linear(_) => "linear",
            Model::Tree(_) => "tree",
            Model::Ensemble(_) => "ensemble",
            Model::ReluNet(_) => "relu-net",
        }
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear(m) => m.score(x),
            Model::Tree(t) => t.score(x),
            Model::Ensemble(e) => e.score(x),
            Model::ReluNet(n) => n.score(x),
        }
    }

    /// Score at or above which the positive class is predicted.
    pub fn decision_threshold(&self) -> f64 {
        match self {
            Model::Linear(_) | Model::ReluNet(_) => 0.0,
            Model::Tree(_) | Model::Ensemble(_) => 0.5,
        }
    }
}

/// A fitted model plus the metadata needed to embed and reload it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub task: Task,
    pub n_inputs: usize,
    pub model: Model,
    /// Training accuracy (classification) or mean squared error (regression).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_metric: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    /// Wraps externally supplied parameters (e.g. a boosted tree list).
    pub fn from_model(model: Model, task: Task, n_inputs: usize) -> Result<Self, ModelError> {
        let m = TrainedModel { task, n_inputs, model, train_metric: None };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let malformed = |m: String| Err(ModelError::Malformed(m));
        match &self.model {
            Model::Linear(l) if l.weights.len() != self.n_inputs => {
                malformed(format!("{} weights for {} inputs", l.weights.len(), self.n_inputs))
            }
            Model::Tree(t) => validate_tree(t, self.n_inputs),
            Model::Ensemble(e) => {
                if e.trees.is_empty() || e.trees.len() != e.weights.len() {
                    return malformed("ensemble needs one weight per tree".into());
                }
                e.trees.iter().try_for_each(|t| validate_tree(t, self.n_inputs))
            }
            Model::ReluNet(n) => {
                n.validate().map_err(ModelError::Malformed)?;
                if n.inputs() != self.n_inputs {
                    return malformed(format!("network takes {} inputs, expected {}", n.inputs(), self.n_inputs));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_inputs {
            return Err(ModelError::Dimension { expected: self.n_inputs, got: x.len() });
        }
        Ok(self.model.score_unchecked(x))
    }

    /// Predicted class index (0 or 1) under the family's decision rule.
    pub fn predict_class(&self, x: &[f64]) -> Result<usize, ModelError> {
        Ok(usize::from(self.score(x)? >= self.model.decision_threshold()))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile { format_version: MODEL_FORMAT_VERSION, model: self.clone() };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::Version(file.format_version));
        }
        file.model.validate()?;
        Ok(file.model)
    }

    /// Loss of the model at one example: logistic for classification,
    /// half squared error for regression.
    pub fn loss(&self, x: &[f64], target: f64) -> Result<f64, ModelError> {
        Ok(mlp::output_loss(self.score(x)?, target, self.task).0)
    }

    /// Exact parameter gradient of [`TrainedModel::loss`] at one example.
    pub fn gradient(&self, x: &[f64], target: f64) -> Result<ParamGradient, ModelError> {
        let s = self.score(x)?;
        match &self.model {
            Model::Linear(_) => {
                let d = mlp::output_loss(s, target, self.task).1;
                Ok(ParamGradient::Linear { weights: x.iter().map(|v| d * v).collect(), bias: d })
            }
            Model::ReluNet(n) => Ok(ParamGradient::ReluNet { layers: n.backprop(x, target, self.task).1 }),
            other => Err(ModelError::Malformed(format!("{} models have no parameter gradient", other.family_name()))),
        }
    }
}

fn validate_tree(t: &Tree, n_inputs: usize) -> Result<(), ModelError> {
    if t.nodes.is_empty() {
        return Err(ModelError::Malformed("empty tree".into()));
    }
    for n in &t.nodes {
        if let Node::Split { col, left, right, .. } = *n {
            if col >= n_inputs || left >= t.nodes.len() || right >= t.nodes.len() {
                return Err(ModelError::Malformed("tree split references a missing column or node".into()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamGradient {
    Linear { weights: Vec<f64>, bias: f64 },
    ReluNet { layers: Vec<Layer> },
}

/// Trains one model family on encoded inputs `xs` and targets `ys` (class
/// index 0/1 for classification). Deterministic given `seed`.
pub fn train(
    xs: &[Vec<f64>],
    ys: &[f64],
    family: Family,
    task: Task,
    hp: &Hyperparams,
    seed: u64,
) -> Result<TrainedModel, TrainError> {
    hp.validate(family)?;
    if xs.is_empty() {
        return Err(TrainError::Empty);
    }
    if task == Task::Classification {
        let pos = ys.iter().filter(|&&y| y > 0.5).count();
        if pos == 0 || pos == ys.len() {
            return Err(TrainError::SingleClass);
        }
    }
    let n_inputs = xs[0].len();
    let cart = tree::CartParams {
        max_depth: hp.max_depth,
        min_samples_leaf: hp.min_samples_leaf,
        max_features: hp.max_features,
    };
    let model = match family {
        Family::Lr | Family::Svm => {
            let loss = match (family, task) {
                (_, Task::Regression) => LinearLoss::Squared,
                (Family::Svm, _) => LinearLoss::Hinge,
                _ => LinearLoss::Logistic,
            };
            let l2 = if family == Family::Svm { hp.l2 } else { 0.0 };
            Model::Linear(LinearModel::fit(xs, ys, loss, hp.epochs, hp.learning_rate, l2)?)
        }
        Family::Cart => Model::Tree(tree::fit_cart(xs, ys, task, cart, seed)),
        Family::Rf => Model::Ensemble(tree::fit_forest(xs, ys, task, cart, hp.n_trees, hp.bootstrap, seed)),
        Family::Mlp => Model::ReluNet(ReluNet::fit(
            xs,
            ys,
            task,
            &hp.hidden,
            hp.epochs,
            hp.learning_rate,
            hp.batch_size,
            seed,
        )?),
    };
    let mut m = TrainedModel { task, n_inputs, model, train_metric: None };
    m.train_metric = Some(evaluate_fit(&m, xs, ys));
    Ok(m)
}

/// Trains a classifier on a dataset's encoded rows and class labels.
pub fn train_on(ds: &Dataset, family: Family, hp: &Hyperparams, seed: u64) -> Result<TrainedModel, TrainError> {
    let task = match ds.labels {
        crate::data::Labels::Class(_) => Task::Classification,
        crate::data::Labels::Real(_) => Task::Regression,
    };
    train(&ds.encoded, &ds.labels.targets(), family, task, hp, seed)
}

/// Accuracy for classifiers, mean squared error for regressors.
pub fn evaluate_fit(m: &TrainedModel, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    match m.task {
        Task::Classification => {
            xs.iter()
                .zip(ys)
                .filter(|(x, &y)| m.predict_class(x).ok() == Some(usize::from(y > 0.5)))
                .count() as f64
                / n
        }
        Task::Regression => {
            xs.iter().zip(ys).map(|(x, y)| (m.model.score_unchecked(x) - y).powi(2)).sum::<f64>() / n
        }
    }
}

/// k-fold cross-validation over candidate hyperparameters. Returns the index
/// of the best candidate and each candidate's mean validation metric
/// (accuracy, or negated MSE for regression, so larger is better).
pub fn cross_validate(
    xs: &[Vec<f64>],
    ys: &[f64],
    family: Family,
    task: Task,
    candidates: &[Hyperparams],
    folds: usize,
    seed: u64,
) -> Result<(usize, Vec<f64>), TrainError> {
    let folds = folds.clamp(2, xs.len().max(2));
    let mut scores = Vec::with_capacity(candidates.len());
    for hp in candidates {
        let mut total = 0.0;
        for f in 0..folds {
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
                if i % folds == f {
                    vx.push(x.clone());
                    vy.push(*y);
                } else {
                    tx.push(x.clone());
                    ty.push(*y);
                }
            }
            let m = train(&tx, &ty, family, task, hp, seed)?;
            let metric = evaluate_fit(&m, &vx, &vy);
            total += if task == Task::Regression { -metric } else { metric };
        }
        scores.push(total / folds as f64);
    }
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if *s > scores[b] { i } else { b });
    Ok((best, scores))
}
