//! JSON-facing configuration of a counterfactual request.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Actionability;
use crate::embed::Direction;
use crate::learners::TrainedModel;
use crate::milp::Sense;
use crate::solver::PoolMode;

use super::BuildError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    /// Desired class, by label level name.
    Class { label: String },
    /// Desired regression band: output at most / at least `value`.
    Regression { direction: Direction, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    L1,
    /// Squared distance through a piecewise-linear epigraph.
    L2Pwl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Weights {
    /// 1 per feature in scaled units.
    Unit,
    /// Inverse median absolute deviation of each numeric feature over the dataset.
    Mad,
    /// Explicit per-feature weights by name; unnamed features get 1.
    Explicit { weights: BTreeMap<String, f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Distance {
    pub norm: Norm,
    pub weights: Weights,
}

impl Default for Distance {
    fn default() -> Self {
        Distance { norm: Norm::L1, weights: Weights::Unit }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Sparsity {
    Off,
    /// At most `k` changed features.
    Hard { k: usize },
    /// `alpha` per changed feature added to the objective; defaults to a
    /// tenth of the mean distance weight.
    Penalty {
        #[serde(default)]
        alpha: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HullNorm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "inf")]
    Inf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Manifold {
    Off,
    /// The counterfactual lies within `epsilon` (in norm `p`) of the convex
    /// hull of the desired-class rows.
    Hard {
        #[serde(default)]
        epsilon: f64,
        #[serde(default = "default_p")]
        p: HullNorm,
    },
    /// Hull slack penalized by `beta` times its l1 norm.
    Soft {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    /// Hull of one k-means cluster of the desired-class rows.
    Clustered {
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        epsilon: f64,
        #[serde(default = "default_p")]
        p: HullNorm,
    },
}

fn default_p() -> HullNorm {
    HullNorm::Inf
}

fn default_beta() -> f64 {
    1.0
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mechanism {
    /// `c(p) = intercept + Σ coeffs·p` on scaled parent values.
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    /// A trained regression model over the scaled parents, predicting the
    /// scaled endogenous feature.
    Learned { model: Box<TrainedModel> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalRelation {
    pub endogenous: String,
    pub parents: Vec<String>,
    pub mechanism: Mechanism,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Each new solution must change a different set of features.
    FeatureExclusion,
    /// Each new solution must move some feature at least `tau` away from
    /// every earlier solution.
    Distance,
    /// One solution per manifold cluster.
    PerCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Diversity {
    /// One solve; up to `m` entries from the solution pool.
    Pool {
        m: usize,
        #[serde(default = "default_pool_mode")]
        pool_mode: PoolMode,
    },
    /// `m` sequential solves, each excluding the earlier answers.
    Iterative {
        m: usize,
        strategy: Strategy,
        #[serde(default = "default_tau")]
        tau: f64,
    },
}

fn default_pool_mode() -> PoolMode {
    PoolMode::AllFeasible
}

fn default_tau() -> f64 {
    0.05
}

impl Diversity {
    pub fn count(&self) -> usize {
        match self {
            Diversity::Pool { m, .. } | Diversity::Iterative { m, .. } => *m,
        }
    }

    pub fn set_count(&mut self, count: usize) {
        match self {
            Diversity::Pool { m, .. } | Diversity::Iterative { m, .. } => *m = count,
        }
    }
}

impl Default for Diversity {
    fn default() -> Self {
        Diversity::Pool { m: 1, pool_mode: default_pool_mode() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActionabilityConfig {
    pub enforce: bool,
    /// Per-feature replacement of the schema's actionability class.
    pub overrides: BTreeMap<String, Actionability>,
}

impl Default for ActionabilityConfig {
    fn default() -> Self {
        ActionabilityConfig { enforce: true, overrides: BTreeMap::new() }
    }
}

/// One term of a user constraint: a numeric feature in original units, or a
/// categorical level indicator when `level` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub feature: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<Term>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Seconds per solve; `None` for no limit.
    pub time_limit: Option<f64>,
    pub node_limit: usize,
    pub gap_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { time_limit: Some(30.0), node_limit: 200_000, gap_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CeConfig {
    pub target: Target,
    /// Validity margin around the decision threshold or regression band.
    pub margin: f64,
    pub distance: Distance,
    pub sparsity: Sparsity,
    pub coherence: bool,
    pub actionability: ActionabilityConfig,
    pub manifold: Manifold,
    pub causality: Vec<CausalRelation>,
    pub diversity: Diversity,
    pub extra_constraints: Vec<LinearConstraint>,
    pub solver: SolverConfig,
    /// Seed for k-means in clustered manifold mode.
    pub seed: u64,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            target: Target::Class { label: String::new() },
            margin: 1e-4,
            distance: Distance::default(),
            sparsity: Sparsity::Off,
            coherence: true,
            actionability: ActionabilityConfig { enforce: false, overrides: BTreeMap::new() },
            manifold: Manifold::Off,
            causality: Vec::new(),
            diversity: Diversity::default(),
            extra_constraints: Vec::new(),
            solver: SolverConfig::default(),
            seed: 0,
        }
    }
}

impl CeConfig {
    pub fn from_json(text: &str) -> Result<Self, BuildError> {
        let cfg: CeConfig = serde_json::from_str(text).map_err(|e| BuildError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BuildError> {
        let bad = |m: String| Err(BuildError::Config(m));
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be a finite non-negative number, got {}", self.margin));
        }
        match self.sparsity {
            Sparsity::Hard { k: 0 } => return bad("hard sparsity needs k >= 1".into()),
            Sparsity::Penalty { alpha: Some(a) } if !(a >= 0.0 && a.is_finite()) => {
                return bad(format!("alpha must be non-negative, got {a}"))
            }
            _ => {}
        }
        match self.manifold {
            Manifold::Hard { epsilon, .. } | Manifold::Clustered { epsilon, .. } if !(epsilon >= 0.0 && epsilon.is_finite()) => {
                return bad(format!("epsilon must be non-negative, got {epsilon}"))
            }
            Manifold::Soft { beta } if !(beta >= 0.0 && beta.is_finite()) => {
                return bad(format!("beta must be non-negative, got {beta}"))
            }
            Manifold::Clustered { k: 0, .. } => return bad("clustered manifold needs k >= 1".into()),
            _ => {}
        }
        if self.diversity.count() == 0 {
            return bad("diversity needs m >= 1".into());
        }
        if let Diversity::Iterative { strategy, tau, .. } = self.diversity {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(format!("tau must be positive, got {tau}"));
            }
            if strategy == Strategy::PerCluster && !matches!(self.manifold, Manifold::Clustered { .. }) {
                return bad("per-cluster diversity needs a clustered manifold".into());
            }
        }
        if let Weights::Explicit { weights } = &self.distance.weights {
            if let Some((name, w)) = weights.iter().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
                return bad(format!("weight for `{name}` must be positive, got {w}"));
            }
        }
        Ok(())
    }
}
