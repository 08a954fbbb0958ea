//! Scores for counterfactual sets and an independent hull-membership check.
//!
//! Numeric distances are in original units. A feature counts as changed when
//! its level differs or its scaled value moves by more than
//! [`CHANGE_TOL`](crate::data::CHANGE_TOL).
//! Integer features are treated as continuous for the proximity and
//! diversity distances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::{HullNorm, Target};
use crate::data::{DataError, Dataset, FeatureSchema, FeatureValue, Record};
use crate::embed::ValidityTarget;
use crate::learners::{ModelError, TrainedModel};
use crate::milp::{MilpError, MilpModel, Sense, VarId};
use crate::solver::{solve_lp, SolveError, Status};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty counterfactual set")]
    Empty,
    #[error("no reports to aggregate")]
    NoReports,
    #[error("target does not match the model or schema: {0}")]
    Target(String),
    #[error("hull check failed: {0}")]
    Hull(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Scores of one factual instance's counterfactual set. Fields that do not
/// apply (no categorical or numeric features, or a single counterfactual
/// for the diversity scores) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub validity: f64,
    pub sparsity: f64,
    pub cat_proximity: Option<f64>,
    pub cont_proximity: Option<f64>,
    pub cat_diversity: Option<f64>,
    pub cont_diversity: Option<f64>,
    pub count_diversity: Option<f64>,
    /// Number of counterfactuals scored.
    pub count: usize,
}

/// Metric names in table order.
pub const METRICS: [&str; 7] =
    ["validity", "sparsity", "cat_proximity", "cont_proximity", "cat_diversity", "cont_diversity", "count_diversity"];

impl MetricsReport {
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            Some(self.validity),
            Some(self.sparsity),
            self.cat_proximity,
            self.cont_proximity,
            self.cat_diversity,
            self.cont_diversity,
            self.count_diversity,
        ]
    }
}

/// Resolves a configured target against the model's decision rule, without
/// the validity margin.
pub fn resolve_target(schema: &FeatureSchema, model: &TrainedModel, target: &Target) -> Result<ValidityTarget, EvalError> {
    use crate::learners::Task;
    match (target, model.task) {
        (Target::Class { label }, Task::Classification) => {
            let levels = schema.label_levels().ok_or_else(|| EvalError::Target("schema has no label levels".into()))?;
            let class = levels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| EvalError::Target(format!("unknown label `{label}`")))?;
            Ok(ValidityTarget::Class { class, margin: 0.0 })
        }
        (Target::Regression { direction, value }, Task::Regression) => {
            Ok(ValidityTarget::Regression { direction: *direction, value: *value, margin: 0.0 })
        }
        _ => Err(EvalError::Target("target kind does not match the model task".into())),
    }
}

fn numeric_gap(a: &FeatureValue, b: &FeatureValue) -> f64 {
    match (a.as_number(), b.as_number()) {
        (Some(x), Some(y)) => (x - y).abs(),
        _ => 0.0,
    }
}

/// Scores a counterfactual set against its factual.
pub fn score_set(
    factual: &Record,
    ces: &[Record],
    model: &TrainedModel,
    schema: &FeatureSchema,
    target: ValidityTarget,
) -> Result<MetricsReport, EvalError> {
    if ces.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = schema.n_features();
    let cat: Vec<usize> = (0..n).filter(|&j| schema.feature(j).is_categorical()).collect();
    let num: Vec<usize> = (0..n).filter(|&j| !schema.feature(j).is_categorical()).collect();
    let m = ces.len() as f64;

    let mut valid = 0usize;
    let (mut changed_frac, mut cat_changed, mut cont_dist) = (0.0, 0.0, 0.0);
    for ce in ces {
        let score = model.score(&schema.encode(ce)?.values)?;
        if crate::builder::satisfies(model, target, score) {
            valid += 1;
        }
        let changed = schema.changed_features(factual, ce);
        changed_frac += changed.iter().filter(|&&c| c).count() as f64 / n as f64;
        if !cat.is_empty() {
            cat_changed += cat.iter().filter(|&&j| changed[j]).count() as f64 / cat.len() as f64;
        }
        cont_dist += num.iter().map(|&j| numeric_gap(&factual.0[j], &ce.0[j])).sum::<f64>();
    }

    let (mut cat_div, mut cont_div, mut count_div, mut pairs) = (0.0, 0.0, 0.0, 0usize);
    for a in 0..ces.len() {
        for b in a + 1..ces.len() {
            let diff = schema.changed_features(&ces[a], &ces[b]);
            if !cat.is_empty() {
                cat_div += cat.iter().filter(|&&j| diff[j]).count() as f64 / cat.len() as f64;
            }
            cont_div += num.iter().map(|&j| numeric_gap(&ces[a].0[j], &ces[b].0[j])).sum::<f64>();
            count_div += diff.iter().filter(|&&d| d).count() as f64 / n as f64;
            pairs += 1;
        }
    }
    let pairs_f = pairs as f64;
    let diverse = pairs > 0;
    Ok(MetricsReport {
        validity: valid as f64 / m,
        sparsity: 1.0 - changed_frac / m,
        cat_proximity: (!cat.is_empty()).then(|| 1.0 - cat_changed / m),
        cont_proximity: (!num.is_empty()).then(|| -cont_dist / m),
        cat_diversity: (diverse && !cat.is_empty()).then(|| cat_div / pairs_f),
        cont_diversity: (diverse && !num.is_empty()).then(|| cont_div / pairs_f),
        count_diversity: diverse.then(|| count_div / pairs_f),
        count: ces.len(),
    })
}

/// Mean and standard error of one metric over the instances reporting it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// Sample standard deviation over the square root of `n`; 0 when n = 1.
    pub se: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub instances: usize,
    pub validity: Option<MeanSe>,
    pub sparsity: Option<MeanSe>,
    pub cat_proximity: Option<MeanSe>,
    pub cont_proximity: Option<MeanSe>,
    pub cat_diversity: Option<MeanSe>,
    pub cont_diversity: Option<MeanSe>,
    pub count_diversity: Option<MeanSe>,
}

impl Summary {
    pub fn values(&self) -> [Option<MeanSe>; 7] {
        [
            self.validity,
            self.sparsity,
            self.cat_proximity,
            self.cont_proximity,
            self.cat_diversity,
            self.cont_diversity,
            self.count_diversity,
        ]
    }
}

pub fn mean_se(xs: &[f64]) -> Option<MeanSe> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = if xs.len() < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Some(MeanSe { mean, se, n: xs.len() })
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<Summary, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoReports);
    }
    let column = |k: usize| -> Option<MeanSe> {
        let xs: Vec<f64> = reports.iter().filter_map(|r| r.values()[k]).collect();
        mean_se(&xs)
    };
    Ok(Summary {
        instances: reports.len(),
        validity: column(0),
        sparsity: column(1),
        cat_proximity: column(2),
        cont_proximity: column(3),
        cat_diversity: column(4),
        cont_diversity: column(5),
        count_diversity: column(6),
    })
}

fn cell(v: Option<MeanSe>) -> String {
    match v {
        Some(MeanSe { mean, se, n }) if n > 1 => format!("{} ({})", fixed(mean), fixed(se)),
        Some(MeanSe { mean, .. }) => fixed(mean),
        None => "--".into(),
    }
}

fn fixed(x: f64) -> String {
    if x.abs() >= 100.0 {
        format!("{x:.1}")
    } else {
        format!("{x:.2}")
    }
}

/// Aligned text table, one row per labelled summary.
pub fn render_table(rows: &[(String, Summary)]) -> String {
    let mut cells: Vec<Vec<String>> = vec![std::iter::once(String::new()).chain(METRICS.iter().map(|m| m.to_string())).collect()];
    for (label, s) in rows {
        cells.push(std::iter::once(label.clone()).chain(s.values().into_iter().map(cell)).collect());
    }
    let widths: Vec<usize> = (0..=METRICS.len()).map(|c| cells.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &cells {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, &w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Outcome of a hull-membership check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullCheck {
    pub inside: bool,
    /// Smallest `‖Σ λ_i x̄_i - x‖_p` over the hull of the class rows.
    pub distance: f64,
    /// `max(0, distance - epsilon)`.
    pub violation: f64,
    /// `(dataset row, weight)` of the closest hull point, positive weights only.
    pub lambda: Vec<(usize, f64)>,
}

/// Tolerance on `distance <= epsilon` when deciding membership.
pub const HULL_TOL: f64 = 1e-6;

/// Distance in norm `p` from `point` to the convex hull of the encoded rows
/// of `class`, found by a linear program separate from any counterfactual model.
pub fn hull_membership(
    point: &Record,
    dataset: &Dataset,
    class: usize,
    epsilon: f64,
    p: HullNorm,
) -> Result<HullCheck, EvalError> {
    let rows = dataset.class_indices(class)?;
    let x = dataset.schema.encode(point)?.values;
    let n = x.len();
    let mut lp = MilpModel::new();
    let lambda: Vec<VarId> =
        rows.iter().map(|i| lp.add_continuous(format!("l{i}"), 0.0, f64::INFINITY)).collect::<Result<_, _>>()?;
    lp.add_constraint(lambda.iter().map(|&l| (l, 1.0)).collect(), Sense::Eq, 1.0, "convex")?;
    let t = match p {
        HullNorm::Inf => Some(lp.add_continuous("t", 0.0, f64::INFINITY)?),
        HullNorm::L1 => None,
    };
    for c in 0..n {
        let mut row: Vec<(VarId, f64)> =
            rows.iter().zip(&lambda).map(|(&r, &l)| (l, dataset.encoded[r][c])).filter(|(_, v)| *v != 0.0).collect();
        // Σ λ x̄ - x = s⁺ - s⁻
        let up = lp.add_continuous(format!("sp{c}"), 0.0, f64::INFINITY)?;
        let down = lp.add_continuous(format!("sm{c}"), 0.0, f64::INFINITY)?;
        row.push((up, -1.0));
        row.push((down, 1.0));
        lp.add_constraint(row, Sense::Eq, x[c], "residual")?;
        match t {
            Some(t) => {
                lp.add_constraint(vec![(up, 1.0), (t, -1.0)], Sense::Le, 0.0, "norm")?;
                lp.add_constraint(vec![(down, 1.0), (t, -1.0)], Sense::Le, 0.0, "norm")?;
            }
            None => {
                lp.add_objective_term(up, 1.0)?;
                lp.add_objective_term(down, 1.0)?;
            }
        }
    }
    if let Some(t) = t {
        lp.add_objective_term(t, 1.0)?;
    }
    let r = solve_lp(&lp)?;
    if r.status != Status::Optimal {
        return Err(EvalError::Hull(format!("membership LP ended {:?}", r.status)));
    }
    let distance = r.objective.unwrap_or(0.0).max(0.0);
    let lambda = rows
        .iter()
        .zip(&lambda)
        .map(|(&i, l)| (i, r.values[l.0]))
        .filter(|(_, w)| *w > 1e-12)
        .collect();
    Ok(HullCheck { inside: distance <= epsilon + HULL_TOL, distance, violation: (distance - epsilon).max(0.0), lambda })
}
