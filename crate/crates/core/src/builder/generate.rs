//! Solving a built problem into validated, decoded counterfactuals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureValue, Record, CHANGE_TOL};
use crate::learners::TrainedModel;
use crate::milp::{MilpModel, Sense, VarId};
use crate::solver::{check_solution, solve_milp, PoolMode, SolveOptions, SolveResult, SolveStats, Status, FEAS_TOL};

use super::{build, build_untightened, satisfies, tag_group, BuildError, CeConfig, CeProblem, Diversity, Strategy, Target};

/// Hull weights behind a manifold-constrained counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCertificate {
    /// `(dataset row, weight)` for every positive weight.
    pub lambda: Vec<(usize, f64)>,
    /// Norms of `Σ λ_i x̄_i - x` for the reported counterfactual.
    pub residual_l1: f64,
    pub residual_inf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    /// Values in original units, ordered like the schema's features.
    pub record: Record,
    /// Per feature: differs from the factual.
    pub changed: Vec<bool>,
    pub objective: f64,
    /// Native model score of the decoded record.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<ManifoldCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeResult {
    pub features: Vec<String>,
    pub factual: Record,
    pub factual_score: f64,
    pub target: Target,
    pub counterfactuals: Vec<Counterfactual>,
    pub requested: usize,
    /// Fewer counterfactuals than requested.
    pub partial: bool,
    /// `limit` when any solve stopped at a time or node limit.
    pub status: Status,
    pub stats: SolveStats,
    /// Constraint count per tag in the (first) solved model.
    pub tag_census: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

impl CeResult {
    /// Text table with the factual first and one row per counterfactual,
    /// labelled (a), (b), ... Unchanged cells show `--`. Only features some
    /// counterfactual changes get a column.
    pub fn table(&self) -> String {
        let shown: Vec<usize> =
            (0..self.features.len()).filter(|&j| self.counterfactuals.iter().any(|c| c.changed[j])).collect();
        let mut rows: Vec<Vec<String>> = Vec::new();
        rows.push(std::iter::once(String::new()).chain(shown.iter().map(|&j| self.features[j].clone())).collect());
        rows.push(std::iter::once("factual".to_string()).chain(shown.iter().map(|&j| self.factual.0[j].to_string())).collect());
        for (k, ce) in self.counterfactuals.iter().enumerate() {
            let label = format!("({})", char::from(b'a' + (k % 26) as u8));
            let cells = shown.iter().map(|&j| if ce.changed[j] { ce.record.0[j].to_string() } else { "--".into() });
            rows.push(std::iter::once(label).chain(cells).collect());
        }
        let widths: Vec<usize> =
            (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(v, &w)| format!("{v:<w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Tag groups a deletion filter may drop, in the order it tries them.
const DROPPABLE: [&str; 9] =
    ["user", "diversity", "proximity", "sparsity", "causality", "manifold", "coherence", "actionability", "validity"];

/// Irreducible set of criterion groups (embedding and domain always kept)
/// that is still infeasible, found by dropping groups one at a time.
pub fn diagnose_infeasibility(
    factual: &Record,
    model: &TrainedModel,
    dataset: &Dataset,
    config: &CeConfig,
) -> Result<Vec<String>, BuildError> {
    let p = build_untightened(factual, model, dataset, config)?;
    let present: BTreeSet<&str> = p.milp.constraints().iter().map(|c| tag_group(&c.tag)).collect();
    let mut kept: BTreeSet<&str> = DROPPABLE.iter().copied().filter(|g| present.contains(g)).collect();
    let opts = SolveOptions {
        node_limit: config.solver.node_limit,
        time_limit: config.solver.time_limit,
        ..Default::default()
    };
    let infeasible = |groups: &BTreeSet<&str>| -> Result<bool, BuildError> {
        let mut m = p.milp.filtered(|t| {
            let g = tag_group(t);
            groups.contains(g) || !DROPPABLE.contains(&g)
        });
        // Zero objective: the search stops at the first feasible point.
        m.set_objective(Vec::new(), 0.0)?;
        Ok(solve_milp(&m, &opts)?.status == Status::Infeasible)
    };
    if !infeasible(&kept)? {
        return Ok(Vec::new());
    }
    for g in DROPPABLE {
        if kept.contains(g) {
            let mut trial = kept.clone();
            trial.remove(g);
            if infeasible(&trial)? {
                kept = trial;
            }
        }
    }
    Ok(kept.into_iter().map(String::from).collect())
}

fn options(config: &CeConfig, p: &CeProblem, pool_size: usize, pool_mode: PoolMode) -> SolveOptions {
    SolveOptions {
        gap_tol: config.solver.gap_tol,
        time_limit: config.solver.time_limit,
        node_limit: config.solver.node_limit,
        pool_size,
        pool_mode,
        distinct_vars: Some(p.x.iter().copied().chain(p.integers.iter().map(|&(_, k)| k)).collect()),
        ..Default::default()
    }
}

/// Folds one solve into the running totals and returns its pool.
fn take(r: SolveResult, total: &mut SolveStats, limited: &mut bool) -> Vec<(Vec<f64>, f64)> {
    total.nodes_explored += r.stats.nodes_explored;
    total.lp_iterations += r.stats.lp_iterations;
    total.incumbents += r.stats.incumbents;
    total.wall_time += r.stats.wall_time;
    *limited |= r.status == Status::Limit;
    r.pool.into_iter().map(|e| (e.values, e.objective)).collect()
}

/// Builds and solves, returning up to `m` validated counterfactuals.
pub fn generate(factual: &Record, model: &TrainedModel, dataset: &Dataset, config: &CeConfig) -> Result<CeResult, BuildError> {
    let mut p = build(factual, model, dataset, config)?;
    let tag_census = p.milp.tag_census();
    let m = config.diversity.count();
    let mut stats = SolveStats::default();
    let mut limited = false;
    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    // Iterative rounds add rows and variables, so each solution is checked
    // against the model it was solved on.
    let mut solved_on: Vec<MilpModel> = Vec::new();
    let infeasible = || -> BuildError {
        match diagnose_infeasibility(factual, model, dataset, config) {
            Ok(tags) => BuildError::Infeasible { tags },
            Err(e) => e,
        }
    };

    match config.diversity {
        Diversity::Pool { m, pool_mode } => {
            let r = solve_milp(&p.milp, &options(config, &p, m, pool_mode))?;
            match r.status {
                Status::Infeasible => return Err(infeasible()),
                Status::Unbounded => return Err(BuildError::Internal("unbounded counterfactual model".into())),
                _ => {}
            }
            found = take(r, &mut stats, &mut limited);
        }
        Diversity::Iterative { m, strategy: Strategy::PerCluster, .. } => {
            let clusters = p.manifold.as_ref().map(|mv| mv.clusters.clone()).unwrap_or_default();
            for &u in clusters.iter() {
                if found.len() >= m {
                    break;
                }
                let mut milp = p.milp.clone();
                milp.tighten_bounds(u, 1.0, 1.0)?;
                let r = solve_milp(&milp, &options(config, &p, 1, PoolMode::ImprovingOnly))?;
                found.extend(take(r, &mut stats, &mut limited));
            }
            if found.is_empty() && !limited {
                return Err(infeasible());
            }
        }
        Diversity::Iterative { m, strategy, tau } => {
            for round in 0..m {
                let r = solve_milp(&p.milp, &options(config, &p, 1, PoolMode::ImprovingOnly))?;
                if r.status == Status::Infeasible && round == 0 {
                    return Err(infeasible());
                }
                let got = take(r, &mut stats, &mut limited);
                let Some((values, _)) = got.first().cloned() else { break };
                solved_on.extend(got.iter().map(|_| p.milp.clone()));
                found.extend(got);
                match strategy {
                    Strategy::FeatureExclusion => exclude_pattern(&mut p, &values)?,
                    _ => exclude_neighbourhood(&mut p, dataset, &values, tau, round)?,
                }
            }
        }
    }
    if found.is_empty() {
        return Err(BuildError::NoSolution);
    }

    let schema = &dataset.schema;
    let mut warnings = p.warnings.clone();
    let mut counterfactuals: Vec<Counterfactual> = Vec::new();
    for (i, (values, objective)) in found.into_iter().enumerate() {
        let milp = solved_on.get(i).unwrap_or(&p.milp);
        match extract(&p, milp, model, dataset, factual, &values, objective)? {
            Ok(ce) => {
                let duplicate = counterfactuals
                    .iter()
                    .any(|o| !schema.changed_features(&o.record, &ce.record).into_iter().any(|c| c));
                if !duplicate {
                    counterfactuals.push(ce);
                }
            }
            Err(why) => warnings.push(why),
        }
    }
    counterfactuals.truncate(m);
    let partial = counterfactuals.len() < m;
    if partial {
        warnings.push(format!("found {} of {m} requested counterfactuals", counterfactuals.len()));
    }
    if counterfactuals.is_empty() {
        return Err(BuildError::NoSolution);
    }
    Ok(CeResult {
        features: schema.features().iter().map(|f| f.name.clone()).collect(),
        factual: factual.clone(),
        factual_score: model.score(&p.factual)?,
        target: config.target.clone(),
        counterfactuals,
        requested: m,
        partial,
        status: if limited { Status::Limit } else { Status::Optimal },
        stats,
        tag_census,
        warnings,
    })
}

/// Next solution must change a different set of features.
fn exclude_pattern(p: &mut CeProblem, values: &[f64]) -> Result<(), BuildError> {
    let mut coeffs = Vec::new();
    let mut rhs = 1.0;
    for cv in p.change.iter().flatten() {
        if values[cv.z.0] > 0.5 {
            coeffs.push((cv.z, -1.0));
            rhs -= 1.0;
        } else {
            coeffs.push((cv.z, 1.0));
        }
    }
    p.milp.add_constraint(coeffs, Sense::Ge, rhs, "diversity")?;
    Ok(())
}

/// Next solution must move some numeric feature at least `tau` (scaled)
/// away from `values`, or pick a different level of some categorical.
fn exclude_neighbourhood(p: &mut CeProblem, dataset: &Dataset, values: &[f64], tau: f64, round: usize) -> Result<(), BuildError> {
    const TAG: &str = "diversity";
    let schema = &dataset.schema;
    let mut coeffs: Vec<(VarId, f64)> = Vec::new();
    let mut rhs = 1.0;
    for j in 0..schema.n_features() {
        let f = schema.feature(j);
        let cols = schema.feature_columns(j);
        if f.is_categorical() {
            let prev = cols.clone().find(|&c| values[p.x[c].0] > 0.5).expect("coherent solution");
            coeffs.push((p.x[prev], -1.0));
            rhs -= 1.0;
            continue;
        }
        let x = p.x[cols.start];
        let (lb, ub) = (p.milp.variable(x).lower, p.milp.variable(x).upper);
        let prev = values[x.0];
        if prev + tau <= ub {
            let g = p.milp.add_binary(format!("far_up[{}#{round}]", f.name));
            p.milp.add_constraint(vec![(x, 1.0), (g, -(prev + tau - lb))], Sense::Ge, lb, TAG)?;
            coeffs.push((g, 1.0));
        }
        if prev - tau >= lb {
            let g = p.milp.add_binary(format!("far_down[{}#{round}]", f.name));
            p.milp.add_constraint(vec![(x, 1.0), (g, ub - prev + tau)], Sense::Le, ub, TAG)?;
            coeffs.push((g, 1.0));
        }
    }
    p.milp.add_constraint(coeffs, Sense::Ge, rhs, TAG)?;
    Ok(())
}

/// Decodes and re-checks one solver solution. The outer error is a hard
/// failure; the inner one a reason to drop this solution.
fn extract(
    p: &CeProblem,
    milp: &MilpModel,
    model: &TrainedModel,
    dataset: &Dataset,
    factual: &Record,
    values: &[f64],
    objective: f64,
) -> Result<Result<Counterfactual, String>, BuildError> {
    let schema = &dataset.schema;
    let report = check_solution(milp, values);
    if !report.is_feasible(10.0 * FEAS_TOL) {
        return Ok(Err(format!(
            "dropped a solution violating `{}` by {:.3e}",
            report.worst_tag.unwrap_or_default(),
            report.max_violation.max(report.bound_violation).max(report.integrality)
        )));
    }
    let mut v: Vec<f64> = p.x.iter().map(|id| values[id.0]).collect();
    for &(j, k) in &p.integers {
        let raw = values[k.0];
        if (raw - raw.round()).abs() > 1e-6 {
            return Err(BuildError::Internal(format!("integer `{}` solved to {raw}", schema.feature(j).name)));
        }
        v[schema.feature_columns(j).start] = schema.feature(j).scale(raw.round());
    }
    for (c, col) in schema.columns().iter().enumerate() {
        if col.level.is_some() {
            v[c] = v[c].round();
        }
    }
    let decoded = match schema.decode(&v) {
        Ok(d) => d,
        Err(e) => return Ok(Err(format!("dropped an incoherent solution: {e}"))),
    };
    if let Some((j, r)) = decoded.integer_residuals.first() {
        return Err(BuildError::Internal(format!("integer `{}` decoded with residual {r}", schema.feature(*j).name)));
    }
    // Unchanged numerics report the factual value exactly.
    let mut record = decoded.record;
    for (j, f) in schema.features().iter().enumerate() {
        let c = schema.feature_columns(j).start;
        if !f.is_categorical() && (v[c] - p.factual[c]).abs() <= CHANGE_TOL {
            record.0[j] = factual.0[j].clone();
        }
    }
    if let Some(FeatureValue::Number(x)) = record.0.iter().find(|v| matches!(v, FeatureValue::Number(x) if !x.is_finite())) {
        return Err(BuildError::Internal(format!("non-finite decoded value {x}")));
    }
    let encoded = schema.encode(&record)?.values;
    let score = model.score(&encoded)?;
    if !satisfies(model, p.validity, score) {
        return Ok(Err(format!("dropped a solution whose native score {score} misses the target")));
    }
    let manifold = p.manifold.as_ref().map(|mv| {
        let lambda: Vec<(usize, f64)> = mv
            .rows
            .iter()
            .zip(&mv.lambda)
            .map(|(&r, l)| (r, values[l.0].max(0.0)))
            .filter(|(_, w)| *w > 1e-12)
            .collect();
        let mut residual = encoded.iter().map(|x| -x).collect::<Vec<f64>>();
        for &(r, w) in &lambda {
            for (res, xb) in residual.iter_mut().zip(&dataset.encoded[r]) {
                *res += w * xb;
            }
        }
        ManifoldCertificate {
            lambda,
            residual_l1: residual.iter().map(|r| r.abs()).sum(),
            residual_inf: residual.iter().fold(0.0, |a, r| a.max(r.abs())),
            cluster: mv.clusters.iter().position(|u| values[u.0] > 0.5),
        }
    });
    Ok(Ok(Counterfactual {
        changed: schema.changed_features(factual, &record),
        record,
        objective,
        score,
        manifold,
    }))
}
