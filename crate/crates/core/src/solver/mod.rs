//! LP simplex and best-bound branch-and-bound with a solution pool.
//!
//! The pool is how the engine produces several counterfactuals from one
//! solve. In [`PoolMode::ImprovingOnly`] it holds the incumbents found on the
//! way to the optimum. In [`PoolMode::AllFeasible`] it keeps the best
//! `pool_size` distinct integer-feasible solutions seen anywhere in the tree,
//! branching past integral nodes so that alternatives are actually visited.

mod simplex;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{MilpModel, VarId};
use simplex::{DenseLp, LpStatus};

/// Integrality tolerance.
pub const INT_TOL: f64 = 1e-6;
/// Feasibility tolerance used for pool entries and [`check_solution`].
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("numerical failure in simplex: {0}")]
    Numerical(String),
    #[error("invalid solve options: {0}")]
    Options(String),
    #[error("integer variable `{0}` has an infinite bound")]
    UnboundedInteger(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    ImprovingOnly,
    AllFeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Fractional part closest to 1/2; ties go to the lowest variable id.
    #[default]
    MostFractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeOrder {
    /// Lowest LP bound first; ties in creation order.
    #[default]
    BestBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Relative optimality gap for pruning against the incumbent.
    pub gap_tol: f64,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub node_limit: usize,
    pub pool_size: usize,
    pub pool_mode: PoolMode,
    pub branch_rule: BranchRule,
    pub node_order: NodeOrder,
    /// Variables whose values decide whether two pool entries are distinct;
    /// all variables when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinct_vars: Option<Vec<VarId>>,
    /// Record every node's LP bound and integer solutions in the result.
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gap_tol: 1e-6,
            time_limit: None,
            node_limit: 200_000,
            pool_size: 1,
            pool_mode: PoolMode::ImprovingOnly,
            branch_rule: BranchRule::MostFractional,
            node_order: NodeOrder::BestBound,
            distinct_vars: None,
            trace: false,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<(), SolveError> {
        if self.pool_size < 1 {
            return Err(SolveError::Options("pool_size must be >= 1".into()));
        }
        if !(self.gap_tol > 0.0) {
            return Err(SolveError::Options("gap_tol must be positive".into()));
        }
        if self.time_limit.is_some_and(|t| !(t > 0.0)) {
            return Err(SolveError::Options("time_limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// A node or time limit stopped the search; the pool holds what was found.
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Whether the entry improved on the best objective when it was found.
    pub incumbent: bool,
    pub node: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: usize,
    pub lp_iterations: usize,
    pub incumbents: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub lp_bound: f64,
    /// Objective of the integer solution recovered at this node, if any.
    pub integer_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: Status,
    pub best_objective: Option<f64>,
    /// Lowest LP bound over unexplored nodes (the optimum when search completed).
    pub best_bound: f64,
    /// Sorted by objective ascending; `pool[0]` is the best solution found.
    pub pool: Vec<PoolEntry>,
    pub stats: SolveStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<NodeRecord>,
}

impl SolveResult {
    pub fn best(&self) -> Option<&PoolEntry> {
        self.pool.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: Status,
    pub objective: Option<f64>,
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Solves the continuous relaxation of `model`.
pub fn solve_lp(model: &MilpModel) -> Result<LpResult, SolveError> {
    let lp = DenseLp::from_model(model);
    let sol = simplex::solve(&lp, &lp.lower, &lp.upper)?;
    let status = match sol.status {
        LpStatus::Optimal => Status::Optimal,
        LpStatus::Infeasible => Status::Infeasible,
        LpStatus::Unbounded => Status::Unbounded,
    };
    Ok(LpResult {
        status,
        objective: (status == Status::Optimal).then_some(sol.objective),
        values: if status == Status::Optimal { sol.x } else { Vec::new() },
        iterations: sol.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Per-constraint violation (0 when satisfied), in constraint order.
    pub residuals: Vec<f64>,
    pub max_violation: f64,
    pub worst_constraint: Option<usize>,
    pub worst_tag: Option<String>,
    pub bound_violation: f64,
    /// Largest distance of an integer or binary variable from an integer.
    pub integrality: f64,
}

impl ViolationReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation <= tol && self.bound_violation <= tol && self.integrality <= tol
    }
}

/// Residuals of `values` against every constraint, box and integrality
/// requirement of `model`.
pub fn check_solution(model: &MilpModel, values: &[f64]) -> ViolationReport {
    assert_eq!(values.len(), model.n_vars(), "assignment must cover every variable");
    let residuals: Vec<f64> = model.constraints().iter().map(|c| c.violation(values)).collect();
    let worst = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let mut bound_violation: f64 = 0.0;
    let mut integrality: f64 = 0.0;
    for (v, &x) in model.variables().iter().zip(values) {
        bound_violation = bound_violation.max(v.lower - x).max(x - v.upper);
        if v.kind.is_integral() {
            integrality = integrality.max((x - x.round()).abs());
        }
    }
    ViolationReport {
        max_violation: worst.map_or(0.0, |i| residuals[i]),
        worst_tag: worst.map(|i| model.constraints()[i].tag.clone()),
        worst_constraint: worst,
        residuals,
        bound_violation,
        integrality,
    }
}

struct Node {
    id: usize,
    bound: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Reversed so the max-heap pops the lowest bound, then the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    lp: DenseLp,
    opts: &'a SolveOptions,
    integers: Vec<usize>,
    distinct: Vec<usize>,
    in_key: Vec<bool>,
    pool: Vec<PoolEntry>,
    best: Option<f64>,
    stats: SolveStats,
    trace: Vec<NodeRecord>,
    next_id: usize,
    start: Instant,
    log: Option<&'a mut dyn Write>,
}

impl Search<'_> {
    fn solve_node(&mut self, lower: &[f64], upper: &[f64]) -> Result<Option<(f64, Vec<f64>)>, SolveError> {
        let sol = simplex::solve(&self.lp, lower, upper)?;
        self.stats.lp_iterations += sol.iterations;
        Ok(match sol.status {
            LpStatus::Optimal => Some((sol.objective, sol.x)),
            _ => None,
        })
    }

    fn new_node(&mut self, parent: Option<usize>, bound: f64, lower: Vec<f64>, upper: Vec<f64>, x: Vec<f64>) -> Node {
        let id = self.next_id;
        self.next_id += 1;
        if self.opts.trace {
            self.trace.push(NodeRecord { id, parent, lp_bound: bound, integer_objective: None });
        }
        Node { id, bound, lower, upper, x }
    }

    fn cutoff(&self) -> Option<f64> {
        let reference = match self.opts.pool_mode {
            PoolMode::ImprovingOnly => self.best?,
            PoolMode::AllFeasible if self.pool.len() >= self.opts.pool_size => self.pool.last()?.objective,
            PoolMode::AllFeasible => return None,
        };
        Some(reference - self.opts.gap_tol * reference.abs().max(1.0))
    }

    fn pruned(&self, bound: f64) -> bool {
        self.cutoff().is_some_and(|c| bound >= c)
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.integers {
            let f = x[j] - x[j].floor();
            if f > INT_TOL && f < 1.0 - INT_TOL {
                let score = (f - 0.5).abs();
                if best.is_none_or(|(_, s)| score < s) {
                    best = Some((j, score));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn same_key(&self, a: &[f64], b: &[f64]) -> bool {
        self.distinct.iter().all(|&j| (a[j] - b[j]).abs() <= FEAS_TOL)
    }

    /// Fixes the integers at their rounded values and re-solves for the best
    /// continuous completion, then offers the result to the pool.
    fn offer(&mut self, node: &Node) -> Result<Option<f64>, SolveError> {
        let mut lower = node.lower.clone();
        let mut upper = node.upper.clone();
        for &j in &self.integers {
            let v = node.x[j].round();
            lower[j] = v;
            upper[j] = v;
        }
        let Some((objective, values)) = self.solve_node(&lower, &upper)? else {
            return Ok(None);
        };
        if self.opts.trace {
            if let Some(r) = self.trace.iter_mut().find(|r| r.id == node.id) {
                r.integer_objective = Some(objective);
            }
        }
        let improves = self.best.is_none_or(|b| objective < b - 1e-9 * b.abs().max(1.0));
        if improves {
            self.best = Some(objective);
            self.stats.incumbents += 1;
            if let Some(log) = self.log.as_deref_mut() {
                let _ = writeln!(
                    log,
                    "incumbent node={} objective={objective:.9} time={:.3}s",
                    node.id,
                    self.start.elapsed().as_secs_f64()
                );
            }
        } else if self.opts.pool_mode == PoolMode::ImprovingOnly {
            return Ok(Some(objective));
        }
        let entry = PoolEntry { values, objective, incumbent: improves, node: node.id };
        match self.pool.iter().position(|e| self.same_key(&e.values, &entry.values)) {
            Some(k) if self.pool[k].objective <= objective => {}
            Some(k) => self.pool[k] = entry,
            None => self.pool.push(entry),
        }
        self.pool.sort_by(|a, b| a.objective.total_cmp(&b.objective));
        self.pool.truncate(self.opts.pool_size);
        Ok(Some(objective))
    }

    fn out_of_budget(&self) -> bool {
        self.stats.nodes_explored >= self.opts.node_limit
            || self.opts.time_limit.is_some_and(|t| self.start.elapsed().as_secs_f64() >= t)
    }

    fn branch(&mut self, heap: &mut BinaryHeap<Node>, node: &Node, j: usize, split: f64) -> Result<(), SolveError> {
        let mut down_upper = node.upper.clone();
        down_upper[j] = split.floor();
        let mut up_lower = node.lower.clone();
        up_lower[j] = split.floor() + 1.0;
        let children = [(node.lower.clone(), down_upper), (up_lower, node.upper.clone())];
        for (lower, upper) in children {
            if lower[j] > upper[j] {
                continue;
            }
            // A child that still contains the parent's LP optimum inherits it.
            let solved = if node.x[j] >= lower[j] - INT_TOL && node.x[j] <= upper[j] + INT_TOL {
                Some((node.bound, node.x.clone()))
            } else {
                self.solve_node(&lower, &upper)?
            };
            if let Some((bound, x)) = solved {
                let child = self.new_node(Some(node.id), bound, lower, upper, x);
                if !self.pruned(child.bound) {
                    heap.push(child);
                }
            }
        }
        Ok(())
    }
}

pub fn solve_milp(model: &MilpModel, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    solve_milp_logged(model, opts, None)
}

/// Branch-and-bound; writes one line per new incumbent to `log` when given.
pub fn solve_milp_logged<'a>(
    model: &'a MilpModel,
    opts: &'a SolveOptions,
    log: Option<&'a mut dyn Write>,
) -> Result<SolveResult, SolveError> {
    opts.validate()?;
    let start = Instant::now();
    let mut lp = DenseLp::from_model(model);
    let mut integers = Vec::new();
    for v in model.variables() {
        if v.kind.is_integral() {
            if !v.lower.is_finite() || !v.upper.is_finite() {
                return Err(SolveError::UnboundedInteger(v.name.clone()));
            }
            lp.lower[v.id.0] = (v.lower - INT_TOL).ceil();
            lp.upper[v.id.0] = (v.upper + INT_TOL).floor();
            integers.push(v.id.0);
        }
    }
    let distinct = match &opts.distinct_vars {
        Some(vars) => vars.iter().map(|v| v.0).collect(),
        None => (0..model.n_vars()).collect(),
    };
    let mut in_key = vec![false; model.n_vars()];
    for &j in &distinct {
        in_key[j] = true;
    }
    let (lower, upper) = (lp.lower.clone(), lp.upper.clone());
    let mut s = Search {
        model,
        lp,
        opts,
        integers,
        distinct,
        in_key,
        pool: Vec::new(),
        best: None,
        stats: SolveStats::default(),
        trace: Vec::new(),
        next_id: 0,
        start,
        log,
    };
    let finish = |s: Search, status: Status, best_bound: f64| {
        let mut stats = s.stats;
        stats.wall_time = s.start.elapsed().as_secs_f64();
        SolveResult { status, best_objective: s.pool.first().map(|e| e.objective), best_bound, pool: s.pool, stats, trace: s.trace }
    };

    let root = simplex::solve(&s.lp, &lower, &upper)?;
    s.stats.lp_iterations += root.iterations;
    match root.status {
        LpStatus::Infeasible => return Ok(finish(s, Status::Infeasible, f64::INFINITY)),
        LpStatus::Unbounded => return Ok(finish(s, Status::Unbounded, f64::NEG_INFINITY)),
        LpStatus::Optimal => {}
    }
    let mut heap = BinaryHeap::new();
    let root = s.new_node(None, root.objective, lower, upper, root.x);
    heap.push(root);

    while let Some(node) = heap.pop() {
        if s.pruned(node.bound) {
            continue;
        }
        if s.out_of_budget() {
            let bound = node.bound;
            return Ok(finish(s, Status::Limit, bound));
        }
        s.stats.nodes_explored += 1;
        match s.most_fractional(&node.x) {
            Some(j) => {
                let split = node.x[j];
                s.branch(&mut heap, &node, j, split)?;
            }
            None => {
                s.offer(&node)?;
                if s.opts.pool_mode == PoolMode::AllFeasible {
                    // Only integers in the distinctness key can lead to new pool entries.
                    let free = s.integers.iter().copied().find(|&j| node.lower[j] < node.upper[j] && s.in_key[j]);
                    if let Some(j) = free {
                        let v = node.x[j].round();
                        let split = if v < node.upper[j] { v } else { v - 1.0 };
                        s.branch(&mut heap, &node, j, split)?;
                    }
                }
            }
        }
    }
    let status = if s.pool.is_empty() { Status::Infeasible } else { Status::Optimal };
    let bound = s.pool.first().map_or(f64::INFINITY, |e| e.objective);
    debug_assert!(s.model.n_vars() == s.lp.n);
    Ok(finish(s, status, bound))
}
