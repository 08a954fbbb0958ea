//! Dense-tableau bounded-variable primal simplex.
//!
//! Every row gets a slack with coefficient +1 whose bounds encode the row
//! sense, so the slack columns of the tableau always hold the basis inverse.
//! Rows whose slack cannot absorb the starting residual get an artificial
//! variable and phase one drives the artificials to zero. Pricing is Dantzig's
//! rule, falling back to Bland's rule after a run of degenerate pivots.

use crate::milp::{MilpModel, Sense};

use super::SolveError;

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const PHASE_ONE_TOL: f64 = 1e-7;
const DEGENERATE_RUN: usize = 50;
const REINVERT_EVERY: usize = 100;

/// Dense copy of a model's rows, objective and variable boxes.
#[derive(Debug, Clone)]
pub(crate) struct DenseLp {
    pub n: usize,
    pub m: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    sense: Vec<Sense>,
    c: Vec<f64>,
    constant: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DenseLp {
    pub fn from_model(model: &MilpModel) -> Self {
        let n = model.n_vars();
        let m = model.n_constraints();
        let mut a = vec![0.0; m * n];
        let mut b = Vec::with_capacity(m);
        let mut sense = Vec::with_capacity(m);
        for (i, con) in model.constraints().iter().enumerate() {
            for &(v, coef) in &con.coeffs {
                a[i * n + v.0] += coef;
            }
            b.push(con.rhs);
            sense.push(con.sense);
        }
        let mut c = vec![0.0; n];
        for &(v, coef) in &model.objective().coeffs {
            c[v.0] += coef;
        }
        DenseLp {
            n,
            m,
            a,
            b,
            sense,
            c,
            constant: model.objective().constant,
            lower: model.variables().iter().map(|v| v.lower).collect(),
            upper: model.variables().iter().map(|v| v.upper).collect(),
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).fold(self.constant, |acc, (c, v)| acc + c * v)
    }

    /// Largest row or bound violation of `x` under the given boxes.
    pub fn max_violation(&self, x: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.m {
            let row = &self.a[i * self.n..(i + 1) * self.n];
            let act: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let scale = row.iter().fold(self.b[i].abs(), |s, a| s.max(a.abs())).max(1.0);
            let v = match self.sense[i] {
                Sense::Le => act - self.b[i],
                Sense::Ge => self.b[i] - act,
                Sense::Eq => (act - self.b[i]).abs(),
            };
            worst = worst.max(v / scale);
        }
        for j in 0..self.n {
            worst = worst.max(lower[j] - x[j]).max(x[j] - upper[j]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (meaningful when optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Free,
}

struct Tableau<'a> {
    lp: &'a DenseLp,
    m: usize,
    cols: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    /// `(row, sign)` of each artificial column, in column order after the slacks.
    artificial: Vec<(usize, f64)>,
    /// The starting tableau, kept for reinversion.
    t0: Vec<f64>,
    since_invert: usize,
    bland_only: bool,
    iterations: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl<'a> Tableau<'a> {
    fn new(lp: &'a DenseLp, lower: &[f64], upper: &[f64], bland_only: bool) -> Self {
        let (n, m) = (lp.n, lp.m);
        let mut x = Vec::with_capacity(n + m);
        let mut state = Vec::with_capacity(n + m);
        for j in 0..n {
            let (l, u) = (lower[j], upper[j]);
            let (v, s) = if l.is_finite() {
                (l, State::Lower)
            } else if u.is_finite() {
                (u, State::Upper)
            } else {
                (0.0, State::Free)
            };
            x.push(v);
            state.push(s);
        }
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        let mut residual = Vec::with_capacity(m);
        for i in 0..m {
            let row = &lp.a[i * n..(i + 1) * n];
            let r = lp.b[i] - row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
            residual.push(r);
            let (sl, su) = match lp.sense[i] {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(sl);
            hi.push(su);
        }
        let mut basis = vec![0; m];
        let mut artificial = Vec::new();
        for i in 0..m {
            let (sl, su) = (lo[n + i], hi[n + i]);
            let r = residual[i];
            if r >= sl - PRIMAL_TOL && r <= su + PRIMAL_TOL {
                x.push(r.clamp(sl, su));
                state.push(State::Basic);
                basis[i] = n + i;
            } else {
                let bound = if r < sl { sl } else { su };
                x.push(bound);
                state.push(if bound == sl { State::Lower } else { State::Upper });
                artificial.push((i, (r - bound).signum()));
            }
        }
        let cols = n + m + artificial.len();
        let mut t = vec![0.0; m * cols];
        let mut sign = vec![1.0; m];
        for (k, &(i, s)) in artificial.iter().enumerate() {
            sign[i] = s;
            basis[i] = n + m + k;
        }
        for i in 0..m {
            let row = &mut t[i * cols..(i + 1) * cols];
            for j in 0..n {
                row[j] = sign[i] * lp.a[i * n + j];
            }
            row[n + i] = sign[i];
        }
        for (k, &(i, s)) in artificial.iter().enumerate() {
            t[i * cols + n + m + k] = 1.0;
            x.push((residual[i] - x[n + i]) * s);
            state.push(State::Basic);
            lo.push(0.0);
            hi.push(f64::INFINITY);
        }
        Tableau {
            lp,
            m,
            cols,
            t0: t.clone(),
            since_invert: 0,
            t,
            basis,
            state,
            x,
            lo,
            hi,
            cost: vec![0.0; cols],
            d: vec![0.0; cols],
            artificial,
            bland_only,
            iterations: 0,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.cols..(i + 1) * self.cols]
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.refresh_duals();
    }

    fn refresh_duals(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(self.row(i)) {
                    *dj -= cb * tij;
                }
            }
        }
        self.d = d;
    }

    /// Recomputes basic values from the nonbasic ones through the basis inverse.
    fn refresh_primals(&mut self) {
        let (n, m) = (self.lp.n, self.m);
        let mut rho = self.lp.b.clone();
        for (k, r) in rho.iter_mut().enumerate() {
            let row = &self.lp.a[k * n..(k + 1) * n];
            for j in 0..n {
                if self.state[j] != State::Basic {
                    *r -= row[j] * self.x[j];
                }
            }
            if self.state[n + k] != State::Basic {
                *r -= self.x[n + k];
            }
        }
        for (a, &(k, s)) in self.artificial.iter().enumerate() {
            if self.state[n + m + a] != State::Basic {
                rho[k] -= s * self.x[n + m + a];
            }
        }
        for i in 0..m {
            let row = self.row(i);
            let v: f64 = (0..m).map(|k| row[n + k] * rho[k]).sum();
            self.x[self.basis[i]] = v;
        }
    }

    fn entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols {
            let dj = self.d[j];
            let dir = match self.state[j] {
                State::Basic => continue,
                _ if self.hi[j] - self.lo[j] <= 0.0 => continue,
                State::Lower if dj < -DUAL_TOL => 1.0,
                State::Upper if dj > DUAL_TOL => -1.0,
                State::Free if dj.abs() > DUAL_TOL => -dj.signum(),
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, score)| dj.abs() > score) {
                best = Some((j, dir, dj.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Rate of change and distance to the blocking bound of the basic
    /// variable in row `i` when column `q` moves in direction `dir`.
    fn row_limit(&self, i: usize, q: usize, dir: f64) -> Option<(f64, f64, f64)> {
        let alpha = self.t[i * self.cols + q];
        if alpha.abs() <= PIVOT_TOL {
            return None;
        }
        let bv = self.basis[i];
        let delta = -dir * alpha;
        if delta < 0.0 {
            self.lo[bv].is_finite().then(|| (-delta, self.x[bv] - self.lo[bv], self.lo[bv]))
        } else {
            self.hi[bv].is_finite().then(|| (delta, self.hi[bv] - self.x[bv], self.hi[bv]))
        }
    }

    /// Two-pass (Harris) ratio test: the longest step that keeps every basic
    /// variable within its bounds relaxed by the primal tolerance, then the
    /// largest pivot among rows blocking within that step. Returns the step
    /// and the leaving row with the bound it leaves at; no row means the
    /// entering variable flips to its other bound.
    fn ratio_test(&self, q: usize, dir: f64, bland: bool) -> (f64, Option<(usize, f64)>) {
        let range = self.hi[q] - self.lo[q];
        let mut theta = f64::INFINITY;
        for i in 0..self.m {
            if let Some((rate, room, _)) = self.row_limit(i, q, dir) {
                theta = theta.min((room.max(0.0) + PRIMAL_TOL) / rate);
            }
        }
        if range <= theta {
            return (range, None);
        }
        // (row, exact ratio, bound, rate) of every row blocking within theta.
        let blocking: Vec<(usize, f64, f64, f64)> = (0..self.m)
            .filter_map(|i| {
                let (rate, room, bound) = self.row_limit(i, q, dir)?;
                let ratio = room.max(0.0) / rate;
                (ratio <= theta).then_some((i, ratio, bound, rate))
            })
            .collect();
        let largest = blocking.iter().map(|b| b.3).fold(0.0, f64::max);
        let chosen = if bland {
            // Lowest basic index among reasonably sized pivots.
            blocking.iter().filter(|b| b.3 >= 0.1 * largest).min_by_key(|b| self.basis[b.0])
        } else {
            blocking.iter().find(|b| b.3 == largest)
        };
        match chosen {
            Some(&(i, ratio, bound, _)) => (ratio, Some((i, bound))),
            None => (theta, None),
        }
    }

    /// Rebuilds the tableau from the original columns and the current basis
    /// by Gauss-Jordan elimination with partial pivoting, discarding the
    /// round-off accumulated by successive pivots.
    fn reinvert(&mut self) -> Result<(), SolveError> {
        let (m, cols) = (self.m, self.cols);
        let mut b = vec![0.0; m * m];
        for i in 0..m {
            for (k, &j) in self.basis.iter().enumerate() {
                b[i * m + k] = self.t0[i * cols + j];
            }
        }
        let mut t = self.t0.clone();
        for k in 0..m {
            let p = (k..m)
                .max_by(|&a, &c| b[a * m + k].abs().total_cmp(&b[c * m + k].abs()))
                .expect("non-empty range");
            let piv = b[p * m + k];
            if piv.abs() < 1e-12 {
                return Err(SolveError::Numerical("singular basis on reinversion".into()));
            }
            if p != k {
                for c in 0..m {
                    b.swap(p * m + c, k * m + c);
                }
                for c in 0..cols {
                    t.swap(p * cols + c, k * cols + c);
                }
            }
            for v in &mut b[k * m..(k + 1) * m] {
                *v /= piv;
            }
            for v in &mut t[k * cols..(k + 1) * cols] {
                *v /= piv;
            }
            let (bk, tk) = (b[k * m..(k + 1) * m].to_vec(), t[k * cols..(k + 1) * cols].to_vec());
            for i in 0..m {
                let f = b[i * m + k];
                if i == k || f == 0.0 {
                    continue;
                }
                for (v, pv) in b[i * m..(i + 1) * m].iter_mut().zip(&bk) {
                    *v -= f * pv;
                }
                for (v, pv) in t[i * cols..(i + 1) * cols].iter_mut().zip(&tk) {
                    *v -= f * pv;
                }
            }
        }
        for (i, &j) in self.basis.iter().enumerate() {
            for k in 0..m {
                t[k * cols + j] = if k == i { 1.0 } else { 0.0 };
            }
        }
        self.t = t;
        self.since_invert = 0;
        self.refresh_primals();
        self.refresh_duals();
        Ok(())
    }

    fn optimize(&mut self, max_iter: usize) -> Result<Phase, SolveError> {
        let mut bland = self.bland_only;
        let mut degenerate = 0;
        let mut verified = false;
        loop {
            if self.iterations >= max_iter {
                return Err(SolveError::Numerical(format!("simplex iteration limit {max_iter} reached")));
            }
            let Some((q, dir)) = self.entering(bland) else {
                if verified {
                    return Ok(Phase::Optimal);
                }
                if self.since_invert > 0 {
                    self.reinvert()?;
                }
                verified = true;
                continue;
            };
            verified = false;
            self.iterations += 1;

            let (step, leave) = self.ratio_test(q, dir, bland);
            if step == f64::INFINITY {
                return Ok(Phase::Unbounded);
            }
            if step <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = self.bland_only;
            }
            for i in 0..self.m {
                let alpha = self.t[i * self.cols + q];
                if alpha != 0.0 {
                    let bv = self.basis[i];
                    self.x[bv] -= dir * alpha * step;
                }
            }
            match leave {
                None => {
                    // Bound flip: the entering variable crosses its own box.
                    let (next_state, value) = if dir > 0.0 { (State::Upper, self.hi[q]) } else { (State::Lower, self.lo[q]) };
                    self.state[q] = next_state;
                    self.x[q] = value;
                }
                Some((r, bound)) => {
                    let out = self.basis[r];
                    self.x[q] += dir * step;
                    self.x[out] = bound;
                    self.state[out] = if bound == self.lo[out] { State::Lower } else { State::Upper };
                    self.pivot(r, q);
                    self.basis[r] = q;
                    self.state[q] = State::Basic;
                    self.since_invert += 1;
                    if self.since_invert >= REINVERT_EVERY {
                        self.reinvert()?;
                    }
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + q];
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[q] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[q] = 0.0;
            }
        };
        before.chunks_mut(cols).for_each(eliminate);
        after.chunks_mut(cols).for_each(eliminate);
        let f = self.d[q];
        if f != 0.0 {
            for (dj, pv) in self.d.iter_mut().zip(prow.iter()) {
                *dj -= f * pv;
            }
            self.d[q] = 0.0;
        }
    }
}

fn run(lp: &DenseLp, lower: &[f64], upper: &[f64], bland_only: bool) -> Result<LpSolution, SolveError> {
    let (n, m) = (lp.n, lp.m);
    for j in 0..n {
        if lower[j] > upper[j] {
            return Ok(LpSolution { status: LpStatus::Infeasible, x: Vec::new(), objective: f64::INFINITY, iterations: 0 });
        }
    }
    let mut tab = Tableau::new(lp, lower, upper, bland_only);
    let max_iter = 20_000 + 50 * (tab.cols + m);
    if !tab.artificial.is_empty() {
        let mut cost = vec![0.0; tab.cols];
        for c in &mut cost[n + m..] {
            *c = 1.0;
        }
        tab.set_cost(cost);
        tab.optimize(max_iter)?;
        let infeasibility: f64 = (n + m..tab.cols).map(|j| tab.x[j].abs()).sum();
        let scale = lp.b.iter().fold(1.0f64, |s, b| s.max(b.abs()));
        if infeasibility > PHASE_ONE_TOL * scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::INFINITY,
                iterations: tab.iterations,
            });
        }
        for j in n + m..tab.cols {
            tab.hi[j] = 0.0;
            if tab.state[j] != State::Basic {
                tab.x[j] = 0.0;
                tab.state[j] = State::Lower;
            }
        }
    }
    let mut cost = vec![0.0; tab.cols];
    cost[..n].copy_from_slice(&lp.c);
    tab.set_cost(cost);
    let phase = tab.optimize(max_iter)?;
    let x: Vec<f64> = tab.x[..n].to_vec();
    match phase {
        Phase::Unbounded => Ok(LpSolution {
            status: LpStatus::Unbounded,
            x,
            objective: f64::NEG_INFINITY,
            iterations: tab.iterations,
        }),
        Phase::Optimal => {
            let x: Vec<f64> = x.iter().enumerate().map(|(j, v)| v.clamp(lower[j], upper[j])).collect();
            let violation = lp.max_violation(&x, lower, upper);
            if violation > 1e-6 {
                return Err(SolveError::Numerical(format!("basic solution violates rows by {violation:e}")));
            }
            Ok(LpSolution { status: LpStatus::Optimal, objective: lp.objective(&x), x, iterations: tab.iterations })
        }
    }
}

/// Solves the LP relaxation with the given variable boxes. A numerically
/// failed Dantzig run is retried once from scratch under Bland's rule.
pub(crate) fn solve(lp: &DenseLp, lower: &[f64], upper: &[f64]) -> Result<LpSolution, SolveError> {
    match run(lp, lower, upper, false) {
        Ok(sol) => Ok(sol),
        Err(SolveError::Numerical(_)) => run(lp, lower, upper, true),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::VarId;

    fn lp(model: &MilpModel) -> LpSolution {
        let d = DenseLp::from_model(model);
        solve(&d, &d.lower.clone(), &d.upper.clone()).unwrap()
    }

    #[test]
    fn maximize_in_unit_box() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 1.0).unwrap();
        m.set_objective(vec![(x, -1.0)], 0.0).unwrap();
        let s = lp(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![1.0]);
        assert_eq!(s.objective, -1.0);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 10.0).unwrap();
        m.add_constraint(vec![(x, 1.0)], Sense::Ge, 2.0, "a").unwrap();
        m.add_constraint(vec![(x, 1.0)], Sense::Le, 1.0, "b").unwrap();
        assert_eq!(lp(&m).status, LpStatus::Infeasible);
    }

    #[test]
    fn free_variable_unbounded() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let y = m.add_continuous("y", 0.0, 1.0).unwrap();
        m.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Le, 3.0, "a").unwrap();
        m.set_objective(vec![(x, 1.0)], 0.0).unwrap();
        assert_eq!(lp(&m).status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_bounded_by_rows() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
        m.add_constraint(vec![(x, 1.0)], Sense::Ge, -2.5, "a").unwrap();
        m.set_objective(vec![(x, 1.0)], 0.0).unwrap();
        let s = lp(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] + 2.5).abs() < 1e-12);
    }

    #[test]
    fn equality_system_needs_phase_one() {
        // x + y = 3, x - y = 1 -> (2, 1)
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 5.0).unwrap();
        let y = m.add_continuous("y", 0.0, 5.0).unwrap();
        m.add_constraint(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 3.0, "a").unwrap();
        m.add_constraint(vec![(x, 1.0), (y, -1.0)], Sense::Eq, 1.0, "a").unwrap();
        m.set_objective(vec![(VarId(0), 1.0)], 0.0).unwrap();
        let s = lp(&m);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's cycling example, as a minimization.
        let mut m = MilpModel::new();
        let v: Vec<VarId> = (0..4).map(|i| m.add_continuous(format!("x{i}"), 0.0, f64::INFINITY).unwrap()).collect();
        m.add_constraint(vec![(v[0], 0.25), (v[1], -8.0), (v[2], -1.0), (v[3], 9.0)], Sense::Le, 0.0, "a").unwrap();
        m.add_constraint(vec![(v[0], 0.5), (v[1], -12.0), (v[2], -0.5), (v[3], 3.0)], Sense::Le, 0.0, "a").unwrap();
        m.add_constraint(vec![(v[2], 1.0)], Sense::Le, 1.0, "a").unwrap();
        m.set_objective(vec![(v[0], -0.75), (v[1], 20.0), (v[2], -0.5), (v[3], 6.0)], 0.0).unwrap();
        let s = lp(&m);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.25).abs() < 1e-9, "{}", s.objective);
    }
}
