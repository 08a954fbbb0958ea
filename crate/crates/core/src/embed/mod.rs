//! Compiles trained models into MILP constraints `y = h(x)`.
//!
//! Inputs are existing MILP variables with finite boxes. Trees use one binary
//! per leaf with big-M path constraints, ensembles sum per-tree outputs, and
//! ReLU networks use the standard big-M activation encoding with interval
//! bounds propagated from the input boxes. Neurons whose sign is fixed over
//! the box get no binary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{Ensemble, LinearModel, Model, ReluNet, TrainedModel, Tree};
use crate::milp::{MilpError, MilpModel, Sense, VarId};

/// Offset separating the open right half-space of a split from its left side.
pub const SPLIT_GAP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("model expects {expected} inputs, got {got} variables")]
    Dimension { expected: usize, got: usize },
    #[error("input variable `{0}` needs a finite box")]
    UnboundedInput(String),
    #[error("non-finite interval bound for neuron {neuron} of layer {layer}")]
    NonFiniteBound { layer: usize, neuron: usize },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingArtifacts {
    pub output: VarId,
    pub output_bounds: (f64, f64),
    /// Leaf indicators per tree as `(binary, leaf value)`; empty for other families.
    pub leaves: Vec<Vec<(VarId, f64)>>,
    /// Per-tree output variables of an ensemble.
    pub tree_outputs: Vec<VarId>,
    /// Every auxiliary variable created (leaf binaries, activations, neuron binaries).
    pub aux: Vec<VarId>,
    /// Pre-activation interval `[L, U]` of every hidden neuron, per layer.
    pub bounds_trace: Vec<Vec<(f64, f64)>>,
    pub tag: String,
}

impl EmbeddingArtifacts {
    fn new(output: VarId, output_bounds: (f64, f64), tag: String) -> Self {
        EmbeddingArtifacts {
            output,
            output_bounds,
            leaves: Vec::new(),
            tree_outputs: Vec::new(),
            aux: Vec::new(),
            bounds_trace: Vec::new(),
            tag,
        }
    }
}

fn input_boxes(milp: &MilpModel, x: &[VarId]) -> Result<Vec<(f64, f64)>, EmbedError> {
    x.iter()
        .map(|&v| {
            let var = milp.variable(v);
            if var.lower.is_finite() && var.upper.is_finite() {
                Ok((var.lower, var.upper))
            } else {
                Err(EmbedError::UnboundedInput(var.name.clone()))
            }
        })
        .collect()
}

/// Interval of `bias + Σ w_i h_i` for `h_i` in the given boxes.
fn affine_bounds(weights: &[f64], bias: f64, boxes: &[(f64, f64)]) -> (f64, f64) {
    weights.iter().zip(boxes).fold((bias, bias), |(lo, hi), (w, (l, u))| {
        let (a, b) = (w * l, w * u);
        (lo + a.min(b), hi + a.max(b))
    })
}

/// Widens an interval by a relative hair so round-off in the solver cannot
/// make an exact interval bound infeasible.
fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    (lo - 1e-9 * lo.abs().max(1.0), hi + 1e-9 * hi.abs().max(1.0))
}

pub fn family_tag(model: &Model) -> String {
    format!("embedding:{}", model.family_name())
}

/// Embeds any trained model on input variables `x`; names are prefixed with `prefix`.
pub fn embed(milp: &mut MilpModel, model: &TrainedModel, x: &[VarId], prefix: &str) -> Result<EmbeddingArtifacts, EmbedError> {
    if x.len() != model.n_inputs {
        return Err(EmbedError::Dimension { expected: model.n_inputs, got: x.len() });
    }
    match &model.model {
        Model::Linear(m) => embed_linear(milp, m, x, prefix),
        Model::Tree(t) => embed_tree(milp, t, x, prefix),
        Model::Ensemble(e) => embed_ensemble(milp, e, x, prefix),
        Model::ReluNet(n) => embed_relunet(milp, n, x, prefix),
    }
}

pub fn embed_linear(milp: &mut MilpModel, model: &LinearModel, x: &[VarId], prefix: &str) -> Result<EmbeddingArtifacts, EmbedError> {
    if x.len() != model.weights.len() {
        return Err(EmbedError::Dimension { expected: model.weights.len(), got: x.len() });
    }
    let boxes = input_boxes(milp, x)?;
    let (lo, hi) = pad(affine_bounds(&model.weights, model.bias, &boxes));
    let tag = "embedding:linear".to_string();
    let y = milp.add_continuous(format!("{prefix}y"), lo, hi)?;
    let mut coeffs = vec![(y, 1.0)];
    coeffs.extend(x.iter().zip(&model.weights).filter(|(_, w)| **w != 0.0).map(|(&v, &w)| (v, -w)));
    milp.add_constraint(coeffs, Sense::Eq, model.bias, &tag)?;
    Ok(EmbeddingArtifacts::new(y, (lo, hi), tag))
}

/// Leaf binaries and path constraints of one tree; returns the output
/// variable and the `(binary, value)` pairs.
fn tree_block(
    milp: &mut MilpModel,
    tree: &Tree,
    x: &[VarId],
    boxes: &[(f64, f64)],
    prefix: &str,
    tag: &str,
) -> Result<(VarId, Vec<(VarId, f64)>), EmbedError> {
    if let Some(c) = tree.max_feature_index() {
        if c >= x.len() {
            return Err(EmbedError::Dimension { expected: c + 1, got: x.len() });
        }
    }
    let paths = tree.leaf_paths();
    let lo = paths.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    let hi = paths.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let y = milp.add_continuous(format!("{prefix}y"), lo, hi)?;
    let mut leaves = Vec::with_capacity(paths.len());
    for p in &paths {
        let z = milp.add_binary(format!("{prefix}leaf{}", p.node));
        leaves.push((z, p.value));
        for &(col, thr, went_left) in &p.conditions {
            let (l, u) = boxes[col];
            let width = u - l;
            if went_left {
                // x <= thr + M (1 - z)
                let m = width.max(u - thr);
                milp.add_constraint(vec![(x[col], 1.0), (z, m)], Sense::Le, thr + m, tag)?;
            } else {
                // x >= thr + gap - M (1 - z)
                let m = width.max(thr + SPLIT_GAP - l);
                milp.add_constraint(vec![(x[col], 1.0), (z, -m)], Sense::Ge, thr + SPLIT_GAP - m, tag)?;
            }
        }
    }
    milp.add_constraint(leaves.iter().map(|&(z, _)| (z, 1.0)).collect(), Sense::Eq, 1.0, tag)?;
    let mut link = vec![(y, 1.0)];
    link.extend(leaves.iter().filter(|(_, v)| *v != 0.0).map(|&(z, v)| (z, -v)));
    milp.add_constraint(link, Sense::Eq, 0.0, tag)?;
    Ok((y, leaves))
}

pub fn embed_tree(milp: &mut MilpModel, tree: &Tree, x: &[VarId], prefix: &str) -> Result<EmbeddingArtifacts, EmbedError> {
    let boxes = input_boxes(milp, x)?;
    let tag = "embedding:tree".to_string();
    let (y, leaves) = tree_block(milp, tree, x, &boxes, prefix, &tag)?;
    let bounds = (milp.variable(y).lower, milp.variable(y).upper);
    let mut art = EmbeddingArtifacts::new(y, bounds, tag);
    art.aux = leaves.iter().map(|l| l.0).collect();
    art.leaves = vec![leaves];
    Ok(art)
}

pub fn embed_ensemble(milp: &mut MilpModel, ens: &Ensemble, x: &[VarId], prefix: &str) -> Result<EmbeddingArtifacts, EmbedError> {
    let boxes = input_boxes(milp, x)?;
    let tag = "embedding:ensemble".to_string();
    let mut outputs = Vec::with_capacity(ens.trees.len());
    let mut all_leaves = Vec::with_capacity(ens.trees.len());
    let (mut lo, mut hi) = (0.0, 0.0);
    for (t, tree) in ens.trees.iter().enumerate() {
        let (yt, leaves) = tree_block(milp, tree, x, &boxes, &format!("{prefix}t{t}_"), &tag)?;
        let w = ens.weights[t];
        let (a, b) = (w * milp.variable(yt).lower, w * milp.variable(yt).upper);
        lo += a.min(b);
        hi += a.max(b);
        outputs.push(yt);
        all_leaves.push(leaves);
    }
    let (lo, hi) = pad((lo, hi));
    let y = milp.add_continuous(format!("{prefix}y"), lo, hi)?;
    let mut link = vec![(y, 1.0)];
    link.extend(outputs.iter().zip(&ens.weights).map(|(&v, &w)| (v, -w)));
    milp.add_constraint(link, Sense::Eq, 0.0, &tag)?;
    let mut art = EmbeddingArtifacts::new(y, (lo, hi), tag);
    art.aux = outputs.clone();
    art.aux.extend(all_leaves.iter().flatten().map(|l| l.0));
    art.tree_outputs = outputs;
    art.leaves = all_leaves;
    Ok(art)
}

/// A hidden unit's value: a constant-zero neuron or a variable.
#[derive(Clone, Copy)]
enum Unit {
    Zero,
    Var(VarId),
}

pub fn embed_relunet(milp: &mut MilpModel, net: &ReluNet, x: &[VarId], prefix: &str) -> Result<EmbeddingArtifacts, EmbedError> {
    net.validate().map_err(EmbedError::Malformed)?;
    if x.len() != net.inputs() {
        return Err(EmbedError::Dimension { expected: net.inputs(), got: x.len() });
    }
    let tag = "embedding:relu-net".to_string();
    let mut boxes = input_boxes(milp, x)?;
    let mut units: Vec<Unit> = x.iter().map(|&v| Unit::Var(v)).collect();
    let mut aux = Vec::new();
    let mut trace = Vec::new();
    let last = net.layers.len() - 1;
    let pre_terms = |row: &[f64], units: &[Unit]| -> Vec<(VarId, f64)> {
        row.iter()
            .zip(units)
            .filter_map(|(&w, u)| match u {
                Unit::Var(v) if w != 0.0 => Some((*v, w)),
                _ => None,
            })
            .collect()
    };
    for (k, layer) in net.layers.iter().enumerate() {
        let bounds: Vec<(f64, f64)> = layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, &b)| affine_bounds(row, b, &boxes))
            .collect();
        for (i, &(l, u)) in bounds.iter().enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(EmbedError::NonFiniteBound { layer: k, neuron: i });
            }
        }
        if k == last {
            let (l, u) = pad(bounds[0]);
            let y = milp.add_continuous(format!("{prefix}y"), l, u)?;
            let mut coeffs = vec![(y, 1.0)];
            coeffs.extend(pre_terms(&layer.weights[0], &units).into_iter().map(|(v, w)| (v, -w)));
            milp.add_constraint(coeffs, Sense::Eq, layer.bias[0], &tag)?;
            let mut art = EmbeddingArtifacts::new(y, (l, u), tag);
            art.aux = aux;
            art.bounds_trace = trace;
            return Ok(art);
        }
        let mut next_units = Vec::with_capacity(bounds.len());
        let mut next_boxes = Vec::with_capacity(bounds.len());
        for (i, (&(l, u), (row, &b))) in bounds.iter().zip(layer.weights.iter().zip(&layer.bias)).enumerate() {
            let terms = pre_terms(row, &units);
            if u <= 0.0 {
                next_units.push(Unit::Zero);
                next_boxes.push((0.0, 0.0));
                continue;
            }
            let a = milp.add_continuous(format!("{prefix}a{k}_{i}"), l.max(0.0), pad((l, u)).1)?;
            aux.push(a);
            // a - pre terms
            let mut diff = vec![(a, 1.0)];
            diff.extend(terms.iter().map(|&(v, w)| (v, -w)));
            if l >= 0.0 {
                milp.add_constraint(diff, Sense::Eq, b, &tag)?;
            } else {
                let z = milp.add_binary(format!("{prefix}on{k}_{i}"));
                aux.push(z);
                milp.add_constraint(diff.clone(), Sense::Ge, b, &tag)?;
                // a <= pre - L (1 - z)
                let mut upper = diff;
                upper.push((z, -l));
                milp.add_constraint(upper, Sense::Le, b - l, &tag)?;
                // a <= U z
                milp.add_constraint(vec![(a, 1.0), (z, -u)], Sense::Le, 0.0, &tag)?;
            }
            next_units.push(Unit::Var(a));
            next_boxes.push((l.max(0.0), u));
        }
        trace.push(bounds);
        units = next_units;
        boxes = next_boxes;
    }
    unreachable!("validated networks have an output layer")
}

/// Which side of the decision boundary, or regression band, the output must reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ValidityTarget {
    /// `class` is 1 for the positive class, 0 for the negative one.
    Class { class: usize, margin: f64 },
    Regression { direction: Direction, value: f64, margin: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AtMost,
    AtLeast,
}

/// Adds the constraints forcing the embedded output onto the target side.
/// Single trees constrain their leaf indicators; score models use the margin
/// around the family's decision threshold.
pub fn validity_constraint(
    milp: &mut MilpModel,
    art: &EmbeddingArtifacts,
    model: &Model,
    target: ValidityTarget,
) -> Result<Vec<usize>, EmbedError> {
    const TAG: &str = "validity";
    let y = art.output;
    let idx = match target {
        ValidityTarget::Regression { direction, value, margin } => match direction {
            Direction::AtMost => milp.add_constraint(vec![(y, 1.0)], Sense::Le, value - margin, TAG)?,
            Direction::AtLeast => milp.add_constraint(vec![(y, 1.0)], Sense::Ge, value + margin, TAG)?,
        },
        ValidityTarget::Class { class, margin } => {
            let positive = class == 1;
            let threshold = model.decision_threshold();
            match model {
                Model::Tree(_) => {
                    let on_side: Vec<(VarId, f64)> = art.leaves[0]
                        .iter()
                        .filter(|(_, v)| (*v >= threshold) == positive)
                        .map(|&(z, _)| (z, 1.0))
                        .collect();
                    milp.add_constraint(on_side, Sense::Eq, 1.0, TAG)?
                }
                _ if positive => milp.add_constraint(vec![(y, 1.0)], Sense::Ge, threshold + margin, TAG)?,
                _ => milp.add_constraint(vec![(y, 1.0)], Sense::Le, threshold - margin, TAG)?,
            }
        }
    };
    Ok(vec![idx])
}
