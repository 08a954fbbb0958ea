//! Assembles the counterfactual MILP: decision variables for every encoded
//! column, the embedded model with its validity constraint, and one block of
//! tagged constraints per active criterion.
//!
//! Tags name the criterion a constraint belongs to (`validity`, `proximity`,
//! `sparsity`, `coherence`, `actionability`, `manifold`, `causality`,
//! `domain`, `diversity`, `user`, and `embedding:<family>`), which is what
//! infeasibility diagnosis reports back.

mod config;
mod generate;
mod kmeans;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::data::{Actionability, DataError, Dataset, FeatureKind, Labels, Record, CHANGE_TOL};
use crate::embed::{self, Direction, EmbedError, EmbeddingArtifacts, ValidityTarget};
use crate::learners::{ModelError, Task, TrainedModel};
use crate::milp::{MilpError, MilpModel, Sense, VarId, VarKind};
use crate::solver::SolveError;

pub use config::{
    ActionabilityConfig, CausalRelation, CeConfig, Distance, Diversity, HullNorm, LinearConstraint, Manifold,
    Mechanism, Norm, SolverConfig, Sparsity, Strategy, Target, Term, Weights,
};
pub use generate::{diagnose_infeasibility, generate, CeResult, Counterfactual, ManifoldCertificate};
pub use kmeans::kmeans;

/// Smallest scaled move an exact change indicator accepts as a change.
pub const CHANGE_EPS: f64 = 10.0 * CHANGE_TOL;

/// Breakpoints per numeric feature for the piecewise-linear squared distance,
/// not counting the factual value itself.
pub const PWL_POINTS: usize = 8;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contradictory constraints: {0}")]
    Contradiction(String),
    #[error("infeasible: conflicting criteria {}", .tags.join(", "))]
    Infeasible { tags: Vec<String> },
    #[error("no solution found within the solver limits")]
    NoSolution,
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Change indicator of one feature. `up`/`down` are present for numeric
/// features when the indicator is exact (z = 1 only if the feature moves).
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeVars {
    pub z: VarId,
    pub up: Option<VarId>,
    pub down: Option<VarId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldVars {
    /// Dataset row behind each hull weight.
    pub rows: Vec<usize>,
    pub lambda: Vec<VarId>,
    /// One slack per encoded column.
    pub slack: Vec<VarId>,
    /// Cluster selectors (clustered mode only) and each row's cluster.
    pub clusters: Vec<VarId>,
    pub labels: Vec<usize>,
}

/// A built counterfactual MILP and the handles needed to read its solutions.
#[derive(Debug, Clone)]
pub struct CeProblem {
    pub milp: MilpModel,
    /// One variable per encoded column, in scaled units.
    pub x: Vec<VarId>,
    /// `(feature, variable)` integer variables in original units.
    pub integers: Vec<(usize, VarId)>,
    /// Per feature, when sparsity or feature-exclusion diversity is active.
    pub change: Vec<Option<ChangeVars>>,
    pub factual: Vec<f64>,
    pub validity: ValidityTarget,
    pub embedding: EmbeddingArtifacts,
    pub manifold: Option<ManifoldVars>,
    pub warnings: Vec<String>,
}

/// Builds the MILP for `config`. Immutable and monotone features also get
/// their boxes tightened, which shrinks big-M constants in the embedding.
pub fn build(factual: &Record, model: &TrainedModel, dataset: &Dataset, config: &CeConfig) -> Result<CeProblem, BuildError> {
    Builder::new(factual, model, dataset, config, true)?.run()
}

/// As [`build`] but every restriction lives in tagged constraints only, so
/// dropping a tag group drops the whole criterion.
pub fn build_untightened(
    factual: &Record,
    model: &TrainedModel,
    dataset: &Dataset,
    config: &CeConfig,
) -> Result<CeProblem, BuildError> {
    Builder::new(factual, model, dataset, config, false)?.run()
}

/// Resolves the configured target against the model and labels.
pub fn validity_target(model: &TrainedModel, dataset: &Dataset, config: &CeConfig) -> Result<ValidityTarget, BuildError> {
    let margin = config.margin;
    match (&config.target, model.task) {
        (Target::Class { label }, Task::Classification) => {
            let class = dataset.class_of(label)?;
            if class > 1 {
                return Err(BuildError::Config(format!("class `{label}` is not one of two label levels")));
            }
            Ok(ValidityTarget::Class { class, margin })
        }
        (Target::Regression { direction, value }, Task::Regression) => {
            Ok(ValidityTarget::Regression { direction: *direction, value: *value, margin })
        }
        _ => Err(BuildError::Config("target kind does not match the model task".into())),
    }
}

/// Whether a native score lands on the target side (margin not applied).
pub fn satisfies(model: &TrainedModel, target: ValidityTarget, score: f64) -> bool {
    match target {
        ValidityTarget::Class { class, .. } => usize::from(score >= model.model.decision_threshold()) == class,
        ValidityTarget::Regression { direction: Direction::AtMost, value, .. } => score <= value,
        ValidityTarget::Regression { direction: Direction::AtLeast, value, .. } => score >= value,
    }
}

/// Tag group of a constraint tag: `embedding:tree` belongs to `embedding`.
pub fn tag_group(tag: &str) -> &str {
    tag.split(':').next().unwrap_or(tag)
}

struct Builder<'a> {
    model: &'a TrainedModel,
    data: &'a Dataset,
    cfg: &'a CeConfig,
    tighten: bool,
    milp: MilpModel,
    xh: Vec<f64>,
    x: Vec<VarId>,
    warnings: Vec<String>,
}

impl<'a> Builder<'a> {
    fn new(
        factual: &'a Record,
        model: &'a TrainedModel,
        data: &'a Dataset,
        cfg: &'a CeConfig,
        tighten: bool,
    ) -> Result<Self, BuildError> {
        cfg.validate()?;
        let schema = &data.schema;
        if model.n_inputs != schema.n_columns() {
            return Err(ModelError::Dimension { expected: schema.n_columns(), got: model.n_inputs }.into());
        }
        let enc = schema.encode(factual)?;
        let mut warnings: Vec<String> = enc
            .clipped
            .iter()
            .map(|&j| format!("factual `{}` clipped into its schema range", schema.feature(j).name))
            .collect();
        let target = validity_target(model, data, cfg)?;
        if satisfies(model, target, model.score(&enc.values)?) {
            warnings.push("factual already satisfies the target; the counterfactual may equal it".into());
        }
        Ok(Builder {
            model,
            data,
            cfg,
            tighten,
            milp: MilpModel::new(),
            xh: enc.values,
            x: Vec::new(),
            warnings,
        })
    }

    fn run(mut self) -> Result<CeProblem, BuildError> {
        let validity = validity_target(self.model, self.data, self.cfg)?;
        self.variables()?;
        self.actionability()?;
        let integers = self.domain()?;
        let embedding = embed::embed(&mut self.milp, self.model, &self.x, "h")?;
        embed::validity_constraint(&mut self.milp, &embedding, &self.model.model, validity)?;
        self.coherence()?;
        let change = self.sparsity()?;
        self.proximity()?;
        let manifold = self.manifold(validity)?;
        self.causality()?;
        self.user_constraints()?;
        Ok(CeProblem {
            milp: self.milp,
            x: self.x,
            integers,
            change,
            factual: self.xh,
            validity,
            embedding,
            manifold,
            warnings: self.warnings,
        })
    }

    fn feature_index(&self, name: &str) -> Result<usize, BuildError> {
        self.data
            .schema
            .feature_index(name)
            .ok_or_else(|| BuildError::Config(format!("unknown feature `{name}`")))
    }

    fn variables(&mut self) -> Result<(), BuildError> {
        let schema = &self.data.schema;
        for c in 0..schema.n_columns() {
            let col = schema.columns()[c];
            let kind = if col.level.is_some() { VarKind::Binary } else { VarKind::Continuous };
            let v = self.milp.add_variable(format!("x[{}]", schema.column_name(c)), kind, 0.0, 1.0)?;
            self.x.push(v);
        }
        Ok(())
    }

    fn effective_actionability(&self) -> Result<Vec<Actionability>, BuildError> {
        let schema = &self.data.schema;
        let act = &self.cfg.actionability;
        for name in act.overrides.keys() {
            self.feature_index(name)?;
        }
        schema
            .features()
            .iter()
            .map(|f| {
                if !act.enforce {
                    return Ok(Actionability::Free);
                }
                let a = act.overrides.get(&f.name).copied().unwrap_or(f.actionability);
                if a == Actionability::Conditional && (!f.is_categorical() || f.allowed_transitions.is_empty()) {
                    return Err(BuildError::Contradiction(format!(
                        "`{}` is conditional but has no allowed-transition map",
                        f.name
                    )));
                }
                Ok(a)
            })
            .collect()
    }

    /// Restricts each column to `[lo, hi]` with a tagged constraint and,
    /// when tightening, in the variable box as well.
    fn restrict(&mut self, c: usize, lo: f64, hi: f64) -> Result<(), BuildError> {
        const TAG: &str = "actionability";
        let v = self.x[c];
        if lo == hi {
            self.milp.add_constraint(vec![(v, 1.0)], Sense::Eq, lo, TAG)?;
        } else {
            if lo > 0.0 {
                self.milp.add_constraint(vec![(v, 1.0)], Sense::Ge, lo, TAG)?;
            }
            if hi < 1.0 {
                self.milp.add_constraint(vec![(v, 1.0)], Sense::Le, hi, TAG)?;
            }
        }
        if self.tighten {
            let name = self.milp.variable(v).name.clone();
            self.milp
                .tighten_bounds(v, lo, hi)
                .map_err(|_| BuildError::Contradiction(format!("actionability leaves `{name}` no feasible value")))?;
        }
        Ok(())
    }

    fn actionability(&mut self) -> Result<(), BuildError> {
        let acts = self.effective_actionability()?;
        let schema = self.data.schema.clone();
        for (j, (f, a)) in schema.features().iter().zip(acts).enumerate() {
            let cols = schema.feature_columns(j);
            if f.is_categorical() {
                let current = cols.clone().position(|c| self.xh[c] == 1.0).expect("coherent factual");
                for (k, c) in cols.enumerate() {
                    let allowed = match a {
                        Actionability::Free | Actionability::NonNegative => continue,
                        Actionability::Immutable => k == current,
                        Actionability::NonDecreasing => k >= current,
                        Actionability::NonIncreasing => k <= current,
                        Actionability::Conditional => {
                            k == current
                                || f.allowed_transitions
                                    .get(&f.levels[current])
                                    .is_some_and(|to| to.iter().any(|l| *l == f.levels[k]))
                        }
                    };
                    if a == Actionability::Immutable {
                        self.restrict(c, self.xh[c], self.xh[c])?;
                    } else if !allowed {
                        self.restrict(c, 0.0, 0.0)?;
                    }
                }
            } else {
                let c = cols.start;
                let xh = self.xh[c];
                match a {
                    Actionability::Free | Actionability::Conditional => {}
                    Actionability::Immutable => self.restrict(c, xh, xh)?,
                    Actionability::NonDecreasing => self.restrict(c, xh, 1.0)?,
                    Actionability::NonIncreasing => self.restrict(c, 0.0, xh)?,
                    Actionability::NonNegative if f.lower < 0.0 => self.restrict(c, f.scale(0.0), 1.0)?,
                    Actionability::NonNegative => {}
                }
            }
        }
        Ok(())
    }

    /// Integer features: an integer variable in original units tied to the
    /// scaled column.
    fn domain(&mut self) -> Result<Vec<(usize, VarId)>, BuildError> {
        let schema = &self.data.schema;
        let mut out = Vec::new();
        for (j, f) in schema.features().iter().enumerate() {
            if f.kind != FeatureKind::Integer || f.range() <= 0.0 {
                continue;
            }
            let x = self.x[schema.feature_columns(j).start];
            let var = self.milp.variable(x);
            let lo = (f.unscale(var.lower) - 1e-9).ceil();
            let hi = (f.unscale(var.upper) + 1e-9).floor();
            if lo > hi {
                return Err(BuildError::Contradiction(format!("`{}` has no integer value in its box", f.name)));
            }
            let k = self.milp.add_variable(format!("k[{}]", f.name), VarKind::Integer, lo, hi)?;
            self.milp.add_constraint(vec![(x, f.range()), (k, -1.0)], Sense::Eq, -f.lower, "domain")?;
            out.push((j, k));
        }
        Ok(out)
    }

    fn coherence(&mut self) -> Result<(), BuildError> {
        if !self.cfg.coherence {
            return Ok(());
        }
        let schema = &self.data.schema;
        for j in 0..schema.n_features() {
            if schema.feature(j).is_categorical() {
                let coeffs = schema.feature_columns(j).map(|c| (self.x[c], 1.0)).collect();
                self.milp.add_constraint(coeffs, Sense::Eq, 1.0, "coherence")?;
            }
        }
        Ok(())
    }

    /// Per-feature change indicators, plus the sparsity budget or penalty.
    fn sparsity(&mut self) -> Result<Vec<Option<ChangeVars>>, BuildError> {
        let exact = matches!(self.cfg.diversity, Diversity::Iterative { strategy: Strategy::FeatureExclusion, .. });
        let tag = match self.cfg.sparsity {
            Sparsity::Off if !exact => return Ok(vec![None; self.data.schema.n_features()]),
            Sparsity::Off => "diversity",
            _ => "sparsity",
        };
        let schema = self.data.schema.clone();
        let mut change = Vec::with_capacity(schema.n_features());
        for (j, f) in schema.features().iter().enumerate() {
            let cols = schema.feature_columns(j);
            let z = self.milp.add_binary(format!("z[{}]", f.name));
            if f.is_categorical() {
                for c in cols.clone() {
                    if self.xh[c] == 1.0 {
                        self.milp.add_constraint(vec![(self.x[c], 1.0), (z, 1.0)], Sense::Ge, 1.0, tag)?;
                        if exact {
                            self.milp.add_constraint(vec![(self.x[c], 1.0), (z, 1.0)], Sense::Eq, 1.0, tag)?;
                        }
                    } else {
                        self.milp.add_constraint(vec![(self.x[c], 1.0), (z, -1.0)], Sense::Le, 0.0, tag)?;
                    }
                }
                change.push(Some(ChangeVars { z, up: None, down: None }));
                continue;
            }
            let c = cols.start;
            let (x, xh) = (self.x[c], self.xh[c]);
            let (lb, ub) = (self.milp.variable(x).lower, self.milp.variable(x).upper);
            // Per-direction big-M: the room above and below the factual value.
            let (room_up, room_down) = (ub - xh, xh - lb);
            if !exact {
                if room_up > 0.0 {
                    self.milp.add_constraint(vec![(x, 1.0), (z, -room_up)], Sense::Le, xh, tag)?;
                }
                if room_down > 0.0 {
                    self.milp.add_constraint(vec![(x, -1.0), (z, -room_down)], Sense::Le, -xh, tag)?;
                }
                change.push(Some(ChangeVars { z, up: None, down: None }));
                continue;
            }
            let up = self.milp.add_binary(format!("up[{}]", f.name));
            let down = self.milp.add_binary(format!("down[{}]", f.name));
            self.milp.add_constraint(vec![(z, 1.0), (up, -1.0), (down, -1.0)], Sense::Eq, 0.0, tag)?;
            self.milp.add_constraint(vec![(x, 1.0), (up, -room_up)], Sense::Le, xh, tag)?;
            self.milp.add_constraint(vec![(x, -1.0), (down, -room_down)], Sense::Le, -xh, tag)?;
            self.milp.add_constraint(vec![(x, 1.0), (up, -(CHANGE_EPS + room_down))], Sense::Ge, lb, tag)?;
            self.milp.add_constraint(vec![(x, 1.0), (down, CHANGE_EPS + room_up)], Sense::Le, ub, tag)?;
            change.push(Some(ChangeVars { z, up: Some(up), down: Some(down) }));
        }
        let zs: Vec<VarId> = change.iter().flatten().map(|c| c.z).collect();
        match self.cfg.sparsity {
            Sparsity::Hard { k } => {
                self.milp.add_constraint(zs.iter().map(|&z| (z, 1.0)).collect(), Sense::Le, k as f64, "sparsity")?;
            }
            Sparsity::Penalty { alpha } => {
                let weights = self.weights()?;
                let alpha = alpha.unwrap_or_else(|| 0.1 * weights.iter().sum::<f64>() / weights.len().max(1) as f64);
                for &z in &zs {
                    self.milp.add_objective_term(z, alpha)?;
                }
            }
            Sparsity::Off => {}
        }
        Ok(change)
    }

    /// Distance weight per feature.
    fn weights(&self) -> Result<Vec<f64>, BuildError> {
        let schema = &self.data.schema;
        let mut w = vec![1.0; schema.n_features()];
        match &self.cfg.distance.weights {
            Weights::Unit => {}
            Weights::Mad => {
                for (j, f) in schema.features().iter().enumerate() {
                    if f.is_categorical() || self.data.encoded.is_empty() {
                        continue;
                    }
                    let c = schema.feature_columns(j).start;
                    let col: Vec<f64> = self.data.encoded.iter().map(|r| r[c]).collect();
                    let med = median(col.clone());
                    let mad = median(col.iter().map(|v| (v - med).abs()).collect());
                    if mad > 1e-9 {
                        w[j] = 1.0 / mad;
                    }
                }
            }
            Weights::Explicit { weights } => {
                for (name, &value) in weights {
                    w[self.feature_index(name)?] = value;
                }
            }
        }
        Ok(w)
    }

    fn proximity(&mut self) -> Result<(), BuildError> {
        const TAG: &str = "proximity";
        let weights = self.weights()?;
        let schema = self.data.schema.clone();
        for (j, f) in schema.features().iter().enumerate() {
            let w = weights[j];
            let cols = schema.feature_columns(j);
            if f.is_categorical() {
                // |x - x̂| is linear on binaries; half weight per column so a
                // level change costs `w`.
                for c in cols {
                    if self.xh[c] == 1.0 {
                        self.milp.add_objective_term(self.x[c], -0.5 * w)?;
                        self.milp.add_objective_constant(0.5 * w)?;
                    } else {
                        self.milp.add_objective_term(self.x[c], 0.5 * w)?;
                    }
                }
                continue;
            }
            let c = cols.start;
            let (x, xh) = (self.x[c], self.xh[c]);
            let (lb, ub) = (self.milp.variable(x).lower, self.milp.variable(x).upper);
            if lb == ub {
                continue;
            }
            match self.cfg.distance.norm {
                Norm::L1 => {
                    let d = self.milp.add_continuous(format!("d[{}]", f.name), 0.0, (ub - xh).max(xh - lb))?;
                    self.milp.add_abs_link(x, d, xh, TAG)?;
                    self.milp.add_objective_term(d, w)?;
                }
                Norm::L2Pwl => {
                    let mut xs: Vec<f64> = (0..PWL_POINTS).map(|i| lb + (ub - lb) * i as f64 / (PWL_POINTS - 1) as f64).collect();
                    xs.push(xh);
                    xs.sort_by(f64::total_cmp);
                    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                    let bps: Vec<(f64, f64)> = xs.iter().map(|&p| (p, (p - xh) * (p - xh))).collect();
                    let t = self.milp.add_pwl_penalty(x, &bps, TAG)?;
                    self.milp.add_objective_term(t, w)?;
                }
            }
        }
        Ok(())
    }

    fn manifold(&mut self, target: ValidityTarget) -> Result<Option<ManifoldVars>, BuildError> {
        const TAG: &str = "manifold";
        let (epsilon, p) = match self.cfg.manifold {
            Manifold::Off => return Ok(None),
            Manifold::Hard { epsilon, p } | Manifold::Clustered { epsilon, p, .. } => (epsilon, Some(p)),
            Manifold::Soft { .. } => (f64::INFINITY, None),
        };
        let candidates = match (&self.data.labels, target) {
            (Labels::Class(_), ValidityTarget::Class { class, .. }) => self.data.class_indices(class)?,
            (Labels::Real(y), _) => {
                let rows: Vec<usize> = (0..y.len()).filter(|&i| satisfies(self.model, target, y[i])).collect();
                if rows.is_empty() {
                    return Err(DataError::EmptyClass("target band".into()).into());
                }
                rows
            }
            _ => return Err(BuildError::Config("target kind does not match the dataset labels".into())),
        };
        // With zero slack a one-hot column fixed by actionability must agree
        // with every row carrying weight, so disagreeing rows are dropped.
        // Duplicate rows add nothing to the hull either.
        let fixed: Vec<(usize, f64)> = if self.tighten && epsilon == 0.0 {
            (0..self.x.len())
                .filter(|&c| self.data.schema.columns()[c].level.is_some())
                .filter_map(|c| {
                    let v = self.milp.variable(self.x[c]);
                    (v.lower == v.upper).then_some((c, v.lower))
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut rows: Vec<usize> = Vec::new();
        for i in candidates {
            let row = &self.data.encoded[i];
            if fixed.iter().all(|&(c, v)| row[c] == v) && !rows.iter().any(|&r| self.data.encoded[r] == *row) {
                rows.push(i);
            }
        }

        let lambda: Vec<VarId> = rows
            .iter()
            .map(|i| self.milp.add_continuous(format!("lambda[{i}]"), 0.0, 1.0))
            .collect::<Result<_, _>>()?;
        let bound = match p {
            Some(_) if epsilon == 0.0 => 0.0,
            Some(HullNorm::Inf) => epsilon.min(1.0),
            _ => 1.0,
        };
        let n = self.x.len();
        let slack: Vec<VarId> = (0..n)
            .map(|c| self.milp.add_continuous(format!("s[{}]", self.data.schema.column_name(c)), -bound, bound))
            .collect::<Result<_, _>>()?;
        for c in 0..n {
            let mut coeffs: Vec<(VarId, f64)> = rows
                .iter()
                .zip(&lambda)
                .filter(|(&r, _)| self.data.encoded[r][c] != 0.0)
                .map(|(&r, &l)| (l, self.data.encoded[r][c]))
                .collect();
            coeffs.push((self.x[c], -1.0));
            coeffs.push((slack[c], -1.0));
            self.milp.add_constraint(coeffs, Sense::Eq, 0.0, TAG)?;
        }
        self.milp.add_constraint(lambda.iter().map(|&l| (l, 1.0)).collect(), Sense::Eq, 1.0, TAG)?;

        if p == Some(HullNorm::L1) && epsilon > 0.0 || p.is_none() {
            let mut abs = Vec::with_capacity(n);
            for (c, &s) in slack.iter().enumerate() {
                let a = self.milp.add_continuous(format!("abs_s[{c}]"), 0.0, 1.0)?;
                self.milp.add_abs_link(s, a, 0.0, TAG)?;
                abs.push(a);
            }
            match self.cfg.manifold {
                Manifold::Soft { beta } => {
                    for &a in &abs {
                        self.milp.add_objective_term(a, beta)?;
                    }
                }
                _ => {
                    self.milp.add_constraint(abs.iter().map(|&a| (a, 1.0)).collect(), Sense::Le, epsilon, TAG)?;
                }
            }
        }

        let (mut clusters, mut labels) = (Vec::new(), Vec::new());
        if let Manifold::Clustered { k, .. } = self.cfg.manifold {
            if k > rows.len() {
                return Err(BuildError::Config(format!("k = {k} exceeds the {} distinct target rows", rows.len())));
            }
            let points: Vec<&[f64]> = rows.iter().map(|&r| self.data.encoded[r].as_slice()).collect();
            labels = kmeans(&points, k, self.cfg.seed);
            clusters = (0..k).map(|q| self.milp.add_binary(format!("cluster[{q}]"))).collect();
            self.milp.add_constraint(clusters.iter().map(|&u| (u, 1.0)).collect(), Sense::Eq, 1.0, TAG)?;
            for (&l, &q) in lambda.iter().zip(&labels) {
                self.milp.add_constraint(vec![(l, 1.0), (clusters[q], -1.0)], Sense::Le, 0.0, TAG)?;
            }
        }
        Ok(Some(ManifoldVars { rows, lambda, slack, clusters, labels }))
    }

    fn causality(&mut self) -> Result<(), BuildError> {
        const TAG: &str = "causality";
        let schema = self.data.schema.clone();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut resolved = Vec::new();
        for rel in &self.cfg.causality {
            let e = self.feature_index(&rel.endogenous)?;
            let ps: Vec<usize> = rel.parents.iter().map(|p| self.feature_index(p)).collect::<Result<_, _>>()?;
            if ps.contains(&e) {
                return Err(BuildError::Config(format!("`{}` cannot be its own parent", rel.endogenous)));
            }
            for &j in ps.iter().chain(std::iter::once(&e)) {
                if schema.feature(j).is_categorical() {
                    return Err(BuildError::Config(format!(
                        "causal relations need numeric features; `{}` is categorical",
                        schema.feature(j).name
                    )));
                }
            }
            edges.extend(ps.iter().map(|&p| (p, e)));
            resolved.push((e, ps, &rel.mechanism));
        }
        if let Some(j) = find_cycle(schema.n_features(), &edges) {
            return Err(BuildError::Config(format!("causal relations form a cycle through `{}`", schema.feature(j).name)));
        }

        for (r, (e, ps, mech)) in resolved.into_iter().enumerate() {
            let col = |j: usize| schema.feature_columns(j).start;
            let parent_vars: Vec<VarId> = ps.iter().map(|&p| self.x[col(p)]).collect();
            let parent_hat: Vec<f64> = ps.iter().map(|&p| self.xh[col(p)]).collect();
            let (xe, xhe) = (self.x[col(e)], self.xh[col(e)]);
            match mech {
                Mechanism::Linear { coeffs, .. } => {
                    if coeffs.len() != ps.len() {
                        return Err(BuildError::Config(format!("relation {r}: {} coefficients for {} parents", coeffs.len(), ps.len())));
                    }
                    let mut terms = vec![(xe, 1.0)];
                    terms.extend(parent_vars.iter().zip(coeffs).map(|(&v, &a)| (v, -a)));
                    let c_hat: f64 = coeffs.iter().zip(&parent_hat).map(|(a, p)| a * p).sum();
                    self.milp.add_constraint(terms, Sense::Eq, xhe - c_hat, TAG)?;
                }
                Mechanism::Learned { model } => {
                    if model.n_inputs != ps.len() {
                        return Err(BuildError::Config(format!("relation {r}: mechanism takes {} inputs, {} parents given", model.n_inputs, ps.len())));
                    }
                    let start = self.milp.n_constraints();
                    let art = embed::embed(&mut self.milp, model, &parent_vars, &format!("c{r}"))?;
                    self.milp.retag_from(start, TAG);
                    let c_hat = model.score(&parent_hat)?;
                    self.milp.add_constraint(vec![(xe, 1.0), (art.output, -1.0)], Sense::Eq, xhe - c_hat, TAG)?;
                }
            }
        }
        Ok(())
    }

    fn user_constraints(&mut self) -> Result<(), BuildError> {
        let schema = self.data.schema.clone();
        for uc in &self.cfg.extra_constraints {
            let mut coeffs = Vec::new();
            let mut rhs = uc.rhs;
            for t in &uc.terms {
                let j = self.feature_index(&t.feature)?;
                let f = schema.feature(j);
                let cols = schema.feature_columns(j);
                match (&t.level, f.is_categorical()) {
                    (Some(level), true) => {
                        let k = f.level_index(level).ok_or_else(|| {
                            BuildError::Config(format!("unknown level `{level}` for `{}`", f.name))
                        })?;
                        coeffs.push((self.x[cols.start + k], t.coeff));
                    }
                    (None, false) => {
                        coeffs.push((self.x[cols.start], t.coeff * f.range()));
                        rhs -= t.coeff * f.lower;
                    }
                    (None, true) => return Err(BuildError::Config(format!("term on `{}` needs a level", f.name))),
                    (Some(_), false) => return Err(BuildError::Config(format!("`{}` is numeric and has no levels", f.name))),
                }
            }
            self.milp.add_constraint(coeffs, uc.sense, rhs, "user")?;
        }
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A node on some directed cycle, if any.
fn find_cycle(n: usize, edges: &[(usize, usize)]) -> Option<usize> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
    }
    // 0 = unvisited, 1 = on stack, 2 = done.
    fn visit(u: usize, adj: &BTreeMap<usize, Vec<usize>>, state: &mut [u8]) -> Option<usize> {
        state[u] = 1;
        for &v in adj.get(&u).into_iter().flatten() {
            match state[v] {
                1 => return Some(v),
                0 => {
                    if let Some(c) = visit(v, adj, state) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        state[u] = 2;
        None
    }
    let mut state = vec![0u8; n];
    (0..n).find_map(|u| if state[u] == 0 { visit(u, &adj, &mut state) } else { None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_detection() {
        assert_eq!(find_cycle(3, &[(0, 1), (1, 2)]), None);
        assert!(find_cycle(3, &[(0, 1), (1, 2), (2, 0)]).is_some());
        assert!(find_cycle(2, &[(1, 1)]).is_some());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn groups_strip_family() {
        assert_eq!(tag_group("embedding:relu-net"), "embedding");
        assert_eq!(tag_group("validity"), "validity");
    }
}
