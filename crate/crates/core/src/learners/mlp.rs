//! Fully connected ReLU networks with a single linear output unit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linear::{logistic_loss, sigmoid};
use super::{check_finite, Task, TrainError};

/// Affine layer; `weights[o][i]` maps input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer { weights: vec![vec![0.0; inputs]; outputs], bias: vec![0.0; outputs] }
    }

    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v))
            .collect()
    }
}

/// Hidden layers use ReLU; the last layer is linear with width 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluNet {
    pub layers: Vec<Layer>,
}

impl ReluNet {
    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, Layer::inputs)
    }

    /// Checks that layer widths chain and the output width is 1.
    pub fn validate(&self) -> Result<(), String> {
        let last = self.layers.last().ok_or("network has no layers")?;
        if last.outputs() != 1 {
            return Err(format!("output layer has width {}", last.outputs()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.iter().any(|r| r.len() != l.inputs()) {
                return Err(format!("layer {k} has ragged weights"));
            }
            if k > 0 && l.inputs() != self.layers[k - 1].outputs() {
                return Err(format!("layer {k} expects {} inputs, previous emits {}", l.inputs(), self.layers[k - 1].outputs()));
            }
        }
        Ok(())
    }

    /// Pre-activations of every layer for input `x`.
    pub fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let z = l.apply(&h);
            if k + 1 < self.layers.len() {
                h = z.iter().map(|v| v.max(0.0)).collect();
            }
            out.push(z);
        }
        out
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.pre_activations(x).last().map_or(0.0, |z| z[0])
    }

    /// Loss and exact parameter gradient for one example.
    pub(crate) fn backprop(&self, x: &[f64], target: f64, task: Task) -> (f64, Vec<Layer>) {
        let pre = self.pre_activations(x);
        let s = pre.last().expect("at least one layer")[0];
        let (loss, ds) = output_loss(s, target, task);
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect();
        let mut delta = vec![ds];
        for k in (0..self.layers.len()).rev() {
            let input: Vec<f64> = if k == 0 { x.to_vec() } else { pre[k - 1].iter().map(|v| v.max(0.0)).collect() };
            for (o, d) in delta.iter().enumerate() {
                grads[k].bias[o] = *d;
                for (i, v) in input.iter().enumerate() {
                    grads[k].weights[o][i] = d * v;
                }
            }
            if k > 0 {
                let layer = &self.layers[k];
                delta = (0..layer.inputs())
                    .map(|i| {
                        if pre[k - 1][i] > 0.0 {
                            delta.iter().enumerate().map(|(o, d)| d * layer.weights[o][i]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        (loss, grads)
    }

    /// Minibatch SGD with per-epoch shuffling from a seeded stream.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn fit(
        xs: &[Vec<f64>],
        ys: &[f64],
        task: Task,
        hidden: &[usize],
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = xs.first().map_or(0, Vec::len);
        let mut widths = vec![n];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: (0..w[1]).map(|_| (0..w[0]).map(|_| rng.gen_range(-bound..bound)).collect()).collect(),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        let mut net = ReluNet { layers };
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let batch = batch_size.max(1);
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(batch) {
                let mut acc: Vec<Layer> = net.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect();
                for &i in chunk {
                    let (loss, g) = net.backprop(&xs[i], ys[i], task);
                    total += loss;
                    for (a, g) in acc.iter_mut().zip(&g) {
                        for (ar, gr) in a.weights.iter_mut().zip(&g.weights) {
                            for (x, y) in ar.iter_mut().zip(gr) {
                                *x += y;
                            }
                        }
                        for (x, y) in a.bias.iter_mut().zip(&g.bias) {
                            *x += y;
                        }
                    }
                }
                let step = learning_rate / chunk.len() as f64;
                for (l, g) in net.layers.iter_mut().zip(&acc) {
                    for (lr, gr) in l.weights.iter_mut().zip(&g.weights) {
                        for (x, y) in lr.iter_mut().zip(gr) {
                            *x -= step * y;
                        }
                    }
                    for (x, y) in l.bias.iter_mut().zip(&g.bias) {
                        *x -= step * y;
                    }
                }
            }
            check_finite(total / xs.len() as f64, epoch)?;
        }
        Ok(net)
    }
}

/// Loss at output score `s` and its derivative: logistic for classification
/// (target in {0, 1}), half squared error for regression.
pub(crate) fn output_loss(s: f64, target: f64, task: Task) -> (f64, f64) {
    match task {
        Task::Classification => (logistic_loss(s, target), sigmoid(s) - target),
        Task::Regression => (0.5 * (s - target) * (s - target), s - target),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_bias() {
        let mut out = Layer::zeros(3, 1);
        out.bias[0] = 0.3;
        let net = ReluNet { layers: vec![Layer::zeros(2, 3), out] };
        assert_eq!(net.score(&[0.2, 0.9]), 0.3);
        net.validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_chains() {
        let net = ReluNet { layers: vec![Layer::zeros(2, 3), Layer::zeros(2, 1)] };
        assert!(net.validate().is_err());
        let net = ReluNet { layers: vec![Layer::zeros(2, 2)] };
        assert!(net.validate().is_err());
    }

    #[test]
    fn fits_regression_line() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.2 + 0.5 * x[0]).collect();
        let net = ReluNet::fit(&xs, &ys, Task::Regression, &[6], 300, 0.1, 8, 3).unwrap();
        let mse: f64 = xs.iter().zip(&ys).map(|(x, y)| (net.score(x) - y).powi(2)).sum::<f64>() / 40.0;
        assert!(mse < 1e-3, "mse {mse}");
    }
}
