//! Independent oracles shared by the integration tests and the acceptance gate.
#![allow(dead_code)]

use cfopt::learners::{Ensemble, Layer, LinearLoss, LinearModel, Model, Node, ReluNet, Task, TrainedModel, Tree};
use cfopt::milp::{MilpModel, Sense, VarId, VarKind};
use rand::Rng;

/// A random pure-integer program together with every feasible objective
/// value, found by enumerating all assignments.
pub struct EnumeratedMilp {
    pub model: MilpModel,
    /// Sorted ascending; one entry per feasible assignment.
    pub feasible: Vec<f64>,
}

pub fn random_integer_milp(rng: &mut impl Rng, binaries: usize, generals: usize, rows: usize) -> EnumeratedMilp {
    let mut m = MilpModel::new();
    let mut vars = Vec::new();
    for i in 0..binaries {
        vars.push(m.add_binary(format!("b{i}")));
    }
    for i in 0..generals {
        vars.push(m.add_variable(format!("g{i}"), VarKind::Integer, 0.0, 2.0).unwrap());
    }
    let mut dense = Vec::new();
    for _ in 0..rows {
        let coeffs: Vec<f64> = vars.iter().map(|_| rng.gen_range(-5..=9) as f64).collect();
        let total: f64 = coeffs.iter().filter(|c| **c > 0.0).sum();
        let rhs = (total * rng.gen_range(0.3..0.7)).round();
        let sense = match rng.gen_range(0..6) {
            0 => Sense::Ge,
            _ => Sense::Le,
        };
        let rhs = if sense == Sense::Ge { -rhs / 2.0 } else { rhs };
        m.add_constraint(vars.iter().copied().zip(coeffs.iter().copied()).collect(), sense, rhs, "random").unwrap();
        dense.push((coeffs, sense, rhs));
    }
    let cost: Vec<f64> = vars.iter().map(|_| rng.gen_range(-10..=4) as f64).collect();
    m.set_objective(vars.iter().copied().zip(cost.iter().copied()).collect(), 0.0).unwrap();

    let radix: Vec<usize> = (0..binaries).map(|_| 2).chain((0..generals).map(|_| 3)).collect();
    let total: usize = radix.iter().product();
    let mut feasible = Vec::new();
    let mut x = vec![0.0; radix.len()];
    for mut code in 0..total {
        for (xi, r) in x.iter_mut().zip(&radix) {
            *xi = (code % r) as f64;
            code /= r;
        }
        let ok = dense.iter().all(|(a, s, b)| {
            let act: f64 = a.iter().zip(&x).map(|(a, v)| a * v).sum();
            match s {
                Sense::Le => act <= b + 1e-9,
                Sense::Ge => act >= b - 1e-9,
                Sense::Eq => (act - b).abs() <= 1e-9,
            }
        });
        if ok {
            feasible.push(cost.iter().zip(&x).map(|(c, v)| c * v).sum());
        }
    }
    feasible.sort_by(f64::total_cmp);
    EnumeratedMilp { model: m, feasible }
}

/// Solves a 3x3 linear system by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let p = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..4 {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    Some([a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]])
}

pub struct RandomLp {
    pub model: MilpModel,
    /// Minimum over feasible vertices, `None` when no vertex is feasible.
    pub optimum: Option<f64>,
}

/// Random box-bounded 3-variable LP with `rows` inequality rows, solved by
/// enumerating every basic solution (intersection of three active planes).
pub fn random_lp3(rng: &mut impl Rng, rows: usize) -> RandomLp {
    let mut m = MilpModel::new();
    let mut planes: Vec<([f64; 3], f64)> = Vec::new();
    let mut checks: Vec<([f64; 3], Sense, f64)> = Vec::new();
    let mut vars: Vec<VarId> = Vec::new();
    for j in 0..3 {
        let lo = rng.gen_range(-3.0..0.0);
        let hi = rng.gen_range(0.5..4.0);
        vars.push(m.add_continuous(format!("x{j}"), lo, hi).unwrap());
        let mut e = [0.0; 3];
        e[j] = 1.0;
        planes.push((e, lo));
        planes.push((e, hi));
        checks.push((e, Sense::Ge, lo));
        checks.push((e, Sense::Le, hi));
    }
    for _ in 0..rows {
        let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let b = rng.gen_range(-1.0..3.0);
        let sense = if rng.gen_bool(0.7) { Sense::Le } else { Sense::Ge };
        m.add_constraint(vars.iter().copied().zip(a).collect(), sense, b, "random").unwrap();
        planes.push((a, b));
        checks.push((a, sense, b));
    }
    let c = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    m.set_objective(vars.iter().copied().zip(c).collect(), 0.0).unwrap();
    let mut optimum: Option<f64> = None;
    let p = planes.len();
    for i in 0..p {
        for j in i + 1..p {
            for k in j + 1..p {
                let rows = [i, j, k].map(|r| [planes[r].0[0], planes[r].0[1], planes[r].0[2], planes[r].1]);
                let Some(x) = solve3(rows) else { continue };
                let ok = checks.iter().all(|(a, s, b)| {
                    let act = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
                    match s {
                        Sense::Le => act <= b + 1e-9,
                        Sense::Ge => act >= b - 1e-9,
                        Sense::Eq => (act - b).abs() <= 1e-9,
                    }
                });
                if ok {
                    let v = c[0] * x[0] + c[1] * x[1] + c[2] * x[2];
                    optimum = Some(optimum.map_or(v, |o: f64| o.min(v)));
                }
            }
        }
    }
    RandomLp { model: m, optimum }
}

pub fn random_linear(rng: &mut impl Rng, n: usize) -> TrainedModel {
    let weights = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let lin = LinearModel { weights, bias: rng.gen_range(-1.0..1.0), loss: LinearLoss::Logistic };
    TrainedModel::from_model(Model::Linear(lin), Task::Classification, n).unwrap()
}

/// Random tree of the given depth whose thresholds stay consistent along
/// every path (each split falls strictly inside the box it refines).
pub fn random_tree(rng: &mut impl Rng, n: usize, depth: usize) -> Tree {
    fn grow(rng: &mut impl Rng, nodes: &mut Vec<Node>, boxes: Vec<(f64, f64)>, depth: usize) -> usize {
        let id = nodes.len();
        nodes.push(Node::Leaf { value: rng.gen_range(0.0..1.0) });
        if depth == 0 || rng.gen_bool(0.15) {
            return id;
        }
        let col = rng.gen_range(0..boxes.len());
        let (lo, hi) = boxes[col];
        let threshold = lo + (hi - lo) * rng.gen_range(0.2..0.8);
        let mut left_box = boxes.clone();
        left_box[col].1 = threshold;
        let mut right_box = boxes;
        right_box[col].0 = threshold;
        let left = grow(rng, nodes, left_box, depth - 1);
        let right = grow(rng, nodes, right_box, depth - 1);
        nodes[id] = Node::Split { col, threshold, left, right };
        id
    }
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, vec![(0.0, 1.0); n], depth);
    Tree { nodes }
}

pub fn random_tree_model(rng: &mut impl Rng, n: usize, depth: usize) -> TrainedModel {
    TrainedModel::from_model(Model::Tree(random_tree(rng, n, depth)), Task::Classification, n).unwrap()
}

pub fn random_ensemble(rng: &mut impl Rng, n: usize, trees: usize, depth: usize) -> TrainedModel {
    let e = Ensemble::average((0..trees).map(|_| random_tree(rng, n, depth)).collect());
    TrainedModel::from_model(Model::Ensemble(e), Task::Classification, n).unwrap()
}

/// Network with the given layer widths, e.g. `[2, 4, 1]`.
pub fn random_relunet(rng: &mut impl Rng, widths: &[usize]) -> TrainedModel {
    let layers = widths
        .windows(2)
        .map(|w| Layer {
            weights: (0..w[1]).map(|_| (0..w[0]).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect(),
            bias: (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        })
        .collect();
    TrainedModel::from_model(Model::ReluNet(ReluNet { layers }), Task::Classification, widths[0]).unwrap()
}
