//! Axis-aligned binary trees (CART) and weighted tree ensembles.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Node {
    /// `x[col] <= threshold` goes left.
    Split { col: usize, threshold: f64, left: usize, right: usize },
    /// For classification trees `value` is the positive-class fraction of the
    /// leaf; for regression the mean target.
    Leaf { value: f64 },
}

/// Binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

/// One root-to-leaf path: the leaf's node id, its value, and the split
/// conditions `(col, threshold, went_left)` along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPath {
    pub node: usize,
    pub value: f64,
    pub conditions: Vec<(usize, f64, bool)>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }] }
    }

    /// A single split `x[col] <= threshold ? left : right`.
    pub fn stump(col: usize, threshold: f64, left: f64, right: f64) -> Self {
        Tree {
            nodes: vec![
                Node::Split { col, threshold, left: 1, right: 2 },
                Node::Leaf { value: left },
                Node::Leaf { value: right },
            ],
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split { col, threshold, left, right } => {
                    id = if x[col] <= threshold { left } else { right };
                }
            }
        }
    }

    /// All leaves with their path conditions, in depth-first (left first) order.
    pub fn leaf_paths(&self) -> Vec<LeafPath> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((id, conds)) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { value } => out.push(LeafPath { node: id, value, conditions: conds }),
                Node::Split { col, threshold, left, right } => {
                    let mut r = conds.clone();
                    r.push((col, threshold, false));
                    stack.push((right, r));
                    let mut l = conds;
                    l.push((col, threshold, true));
                    stack.push((left, l));
                }
            }
        }
        out
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { col, .. } => Some(*col),
                Node::Leaf { .. } => None,
            })
            .max()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, id: usize) -> usize {
            match t.nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

/// Weighted sum of tree scores; for averaging the weights sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub weights: Vec<f64>,
}

impl Ensemble {
    /// Uniform average of the given trees.
    pub fn average(trees: Vec<Tree>) -> Self {
        let w = 1.0 / trees.len() as f64;
        let weights = vec![w; trees.len()];
        Ensemble { trees, weights }
    }

    /// Member scores summed in tree order.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.trees.iter().zip(&self.weights).fold(0.0, |acc, (t, w)| acc + w * t.score(x))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CartParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub max_features: Option<usize>,
}

struct Builder<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [f64],
    task: Task,
    params: CartParams,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.ys[i]).sum::<f64>() / idx.len() as f64
    }

    /// Gini impurity (classification) or sum of squared deviations
    /// (regression), weighted by sample count.
    fn impurity(&self, sum: f64, sum_sq: f64, count: f64) -> f64 {
        match self.task {
            Task::Classification => {
                let p = sum / count;
                count * 2.0 * p * (1.0 - p)
            }
            Task::Regression => sum_sq - sum * sum / count,
        }
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: self.leaf_value(&idx) });
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let (sum, sum_sq) = idx.iter().fold((0.0, 0.0), |(s, q), &i| (s + self.ys[i], q + self.ys[i] * self.ys[i]));
        let parent = self.impurity(sum, sum_sq, idx.len() as f64);
        if parent <= 1e-12 {
            return id;
        }
        let n_cols = self.xs[0].len();
        let mut cols: Vec<usize> = (0..n_cols).collect();
        if let (Some(k), Some(rng)) = (self.params.max_features, self.rng.as_mut()) {
            cols.shuffle(rng);
            cols.truncate(k.clamp(1, n_cols));
            cols.sort_unstable();
        }
        let min_leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.clone();
        for &c in &cols {
            order.sort_by(|&a, &b| self.xs[a][c].total_cmp(&self.xs[b][c]));
            let (mut ls, mut lq) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let y = self.ys[order[k]];
                ls += y;
                lq += y * y;
                let (a, b) = (self.xs[order[k]][c], self.xs[order[k + 1]][c]);
                let nl = k + 1;
                let nr = order.len() - nl;
                if a == b || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let child = self.impurity(ls, lq, nl as f64) + self.impurity(sum - ls, sum_sq - lq, nr as f64);
                if best.is_none_or(|(imp, _, _)| child < imp - 1e-12) {
                    best = Some((child, c, 0.5 * (a + b)));
                }
            }
        }
        // Zero-gain splits are accepted: XOR-like targets need them.
        let Some((_, col, threshold)) = best else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.xs[i][col] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { col, threshold, left, right };
        id
    }
}

pub(crate) fn fit_cart(xs: &[Vec<f64>], ys: &[f64], task: Task, params: CartParams, seed: u64) -> Tree {
    let rng = params.max_features.map(|_| ChaCha8Rng::seed_from_u64(seed));
    let mut b = Builder { xs, ys, task, params, rng, nodes: Vec::new() };
    b.grow((0..xs.len()).collect(), 0);
    Tree { nodes: b.nodes }
}

pub(crate) fn fit_forest(
    xs: &[Vec<f64>],
    ys: &[f64],
    task: Task,
    params: CartParams,
    n_trees: usize,
    bootstrap: bool,
    seed: u64,
) -> Ensemble {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..n_trees)
        .map(|t| {
            // The first tree reuses the caller's seed so a one-tree forest
            // without bootstrap reproduces plain CART.
            let tree_seed: u64 = if t == 0 { seed } else { rng.gen() };
            if bootstrap {
                let (bx, by): (Vec<_>, Vec<_>) = (0..xs.len())
                    .map(|_| {
                        let i = rng.gen_range(0..xs.len());
                        (xs[i].clone(), ys[i])
                    })
                    .unzip();
                fit_cart(&bx, &by, task, params, tree_seed)
            } else {
                fit_cart(xs, ys, task, params, tree_seed)
            }
        })
        .collect();
    Ensemble::average(trees)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(depth: usize) -> CartParams {
        CartParams { max_depth: depth, min_samples_leaf: 1, max_features: None }
    }

    #[test]
    fn stump_routes_by_threshold() {
        let t = Tree::stump(0, 0.5, 0.0, 1.0);
        assert_eq!(t.score(&[0.7, 0.0]), 1.0);
        assert_eq!(t.score(&[0.5, 0.0]), 0.0);
    }

    #[test]
    fn leaf_paths_cover_all_leaves() {
        let xs = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let t = fit_cart(&xs, &[0.0, 1.0, 1.0, 0.0], Task::Classification, params(2), 0);
        let paths = t.leaf_paths();
        assert_eq!(paths.len(), 4);
        for p in &paths {
            assert_eq!(p.conditions.len(), 2);
        }
    }

    #[test]
    fn depth_limit_respected() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0]).collect();
        let ys: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let t = fit_cart(&xs, &ys, Task::Classification, params(3), 0);
        assert!(t.depth() <= 3);
    }

    #[test]
    fn regression_tree_fits_step() {
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 } else { 3.0 }).collect();
        let t = fit_cart(&xs, &ys, Task::Regression, params(1), 0);
        assert_eq!(t.score(&[2.0]), 1.0);
        assert_eq!(t.score(&[7.0]), 3.0);
    }
}
