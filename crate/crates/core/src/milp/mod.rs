//! In-memory mixed-integer linear programs.
//!
//! Models are append-only: variables and constraints can be added (and
//! variable boxes tightened) but never removed, so ids handed out stay valid.
//! Every constraint carries a tag naming the criterion that produced it.

mod lp_format;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lp_format::export_lp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        self != VarKind::Continuous
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: String,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    /// Amount by which `values` violates this constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let a = self.activity(values);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => (a - self.rhs).abs(),
        }
    }
}

/// Linear objective, always minimized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub coeffs: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Objective {
    pub fn value(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().fold(self.constant, |acc, (v, c)| acc + c * values[v.0])
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MilpError {
    #[error("unknown variable id {0}")]
    UnknownVar(usize),
    #[error("non-finite coefficient {value} in {context}")]
    NonFinite { context: String, value: f64 },
    #[error("variable `{name}` has empty box [{lower}, {upper}]")]
    EmptyBox { name: String, lower: f64, upper: f64 },
    #[error("piecewise-linear breakpoints are not convex: {0}")]
    NonConvex(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MilpModel {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
}

fn finite(context: impl FnOnce() -> String, value: f64) -> Result<(), MilpError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(MilpError::NonFinite { context: context(), value })
    }
}

impl MilpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Adds a variable. Bounds may be infinite for continuous variables;
    /// binaries are clamped to `[0, 1]`.
    pub fn add_variable(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> Result<VarId, MilpError> {
        let name = name.into();
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        if lower.is_nan() || upper.is_nan() || lower > upper || lower == f64::INFINITY || upper == f64::NEG_INFINITY {
            return Err(MilpError::EmptyBox { name, lower, upper });
        }
        let id = VarId(self.variables.len());
        self.variables.push(Variable { id, name, kind, lower, upper });
        Ok(id)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_variable(name, VarKind::Binary, 0.0, 1.0).expect("binary box is valid")
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Result<VarId, MilpError> {
        self.add_variable(name, VarKind::Continuous, lower, upper)
    }

    /// Intersects a variable's box with `[lower, upper]`.
    pub fn tighten_bounds(&mut self, id: VarId, lower: f64, upper: f64) -> Result<(), MilpError> {
        self.check_var(id)?;
        let v = &mut self.variables[id.0];
        let (lo, hi) = (v.lower.max(lower), v.upper.min(upper));
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(MilpError::EmptyBox { name: v.name.clone(), lower: lo, upper: hi });
        }
        v.lower = lo;
        v.upper = hi;
        Ok(())
    }

    fn check_var(&self, id: VarId) -> Result<(), MilpError> {
        if id.0 < self.variables.len() {
            Ok(())
        } else {
            Err(MilpError::UnknownVar(id.0))
        }
    }

    fn check_terms(&self, coeffs: &[(VarId, f64)], what: &str) -> Result<(), MilpError> {
        for &(v, c) in coeffs {
            self.check_var(v)?;
            finite(|| format!("{what} term for `{}`", self.variables[v.0].name), c)?;
        }
        Ok(())
    }

    /// Adds `Σ coeffs·x  sense  rhs` and returns its index.
    pub fn add_constraint(
        &mut self,
        coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
        tag: impl Into<String>,
    ) -> Result<usize, MilpError> {
        let tag = tag.into();
        self.check_terms(&coeffs, &format!("`{tag}` constraint"))?;
        finite(|| format!("`{tag}` constraint right-hand side"), rhs)?;
        self.constraints.push(Constraint { coeffs, sense, rhs, tag });
        Ok(self.constraints.len() - 1)
    }

    pub fn set_objective(&mut self, coeffs: Vec<(VarId, f64)>, constant: f64) -> Result<(), MilpError> {
        self.check_terms(&coeffs, "objective")?;
        finite(|| "objective constant".into(), constant)?;
        self.objective = Objective { coeffs, constant };
        Ok(())
    }

    pub fn add_objective_term(&mut self, var: VarId, coeff: f64) -> Result<(), MilpError> {
        self.check_terms(&[(var, coeff)], "objective")?;
        self.objective.coeffs.push((var, coeff));
        Ok(())
    }

    pub fn add_objective_constant(&mut self, c: f64) -> Result<(), MilpError> {
        finite(|| "objective constant".into(), c)?;
        self.objective.constant += c;
        Ok(())
    }

    /// `a >= u - reference` and `a >= reference - u`, so a penalized `a`
    /// equals `|u - reference|` at the optimum.
    pub fn add_abs_link(&mut self, u: VarId, a: VarId, reference: f64, tag: &str) -> Result<[usize; 2], MilpError> {
        let up = self.add_constraint(vec![(a, 1.0), (u, -1.0)], Sense::Ge, -reference, tag)?;
        let down = self.add_constraint(vec![(a, 1.0), (u, 1.0)], Sense::Ge, reference, tag)?;
        Ok([up, down])
    }

    /// Epigraph of the convex piecewise-linear function through `breakpoints`
    /// (sorted by abscissa), extended linearly beyond the end points. Returns
    /// a new variable `t` with `t >= f(var)`, one constraint per segment; the
    /// caller puts `t` in the objective.
    pub fn add_pwl_penalty(&mut self, var: VarId, breakpoints: &[(f64, f64)], tag: &str) -> Result<VarId, MilpError> {
        self.check_var(var)?;
        if breakpoints.len() < 2 {
            return Err(MilpError::NonConvex("need at least two breakpoints".into()));
        }
        for &(x, y) in breakpoints {
            finite(|| "breakpoint".into(), x)?;
            finite(|| "breakpoint".into(), y)?;
        }
        let mut slopes = Vec::with_capacity(breakpoints.len() - 1);
        for w in breakpoints.windows(2) {
            let dx = w[1].0 - w[0].0;
            if dx <= 0.0 {
                return Err(MilpError::NonConvex(format!("abscissae not increasing at {}", w[1].0)));
            }
            slopes.push((w[1].1 - w[0].1) / dx);
        }
        if let Some(k) = slopes.windows(2).position(|s| s[1] < s[0] - 1e-12 * s[0].abs().max(1.0)) {
            return Err(MilpError::NonConvex(format!("slope decreases after breakpoint {}", breakpoints[k + 1].0)));
        }
        let f = |x: f64| -> f64 {
            slopes
                .iter()
                .zip(breakpoints)
                .map(|(s, (bx, by))| by + s * (x - bx))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let v = self.variables[var.0].clone();
        let mut candidates = vec![v.lower, v.upper];
        candidates.extend(breakpoints.iter().map(|b| b.0).filter(|x| (v.lower..=v.upper).contains(x)));
        let values: Vec<f64> = candidates.iter().map(|&x| f(x)).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let t = self.add_variable(format!("pwl_{}", v.name), VarKind::Continuous, lo, hi)?;
        for (s, (bx, by)) in slopes.iter().zip(breakpoints) {
            self.add_constraint(vec![(t, 1.0), (var, -s)], Sense::Ge, by - s * bx, tag)?;
        }
        Ok(t)
    }

    /// Constraint count per tag, ordered by tag.
    pub fn tag_census(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.constraints {
            *out.entry(c.tag.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Re-tags every constraint from index `from` onwards.
    pub fn retag_from(&mut self, from: usize, tag: &str) {
        for c in self.constraints.iter_mut().skip(from) {
            c.tag = tag.to_string();
        }
    }

    /// Copy of the model keeping only constraints whose tag passes `keep`.
    pub fn filtered(&self, keep: impl Fn(&str) -> bool) -> MilpModel {
        MilpModel {
            variables: self.variables.clone(),
            constraints: self.constraints.iter().filter(|c| keep(&c.tag)).cloned().collect(),
            objective: self.objective.clone(),
        }
    }

    /// Copy with every integer and binary variable relaxed to continuous.
    pub fn relaxed(&self) -> MilpModel {
        let mut m = self.clone();
        for v in &mut m.variables {
            v.kind = VarKind::Continuous;
        }
        m
    }
}
