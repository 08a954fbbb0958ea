use serde::{Deserialize, Serialize};

use super::{check_finite, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearLoss {
    Logistic,
    Hinge,
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub loss: LinearLoss,
}

impl LinearModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).fold(self.bias, |acc, (w, v)| acc + w * v)
    }

    /// Full-batch gradient descent on the chosen loss. For `Hinge` the labels
    /// are mapped to {-1, +1} and an L2 term `l2/2 * |w|^2` is added.
    pub(crate) fn fit(
        xs: &[Vec<f64>],
        ys: &[f64],
        loss: LinearLoss,
        epochs: usize,
        learning_rate: f64,
        l2: f64,
    ) -> Result<Self, TrainError> {
        let n = xs.first().map_or(0, Vec::len);
        let mut m = LinearModel { weights: vec![0.0; n], bias: 0.0, loss };
        let count = xs.len() as f64;
        for epoch in 0..epochs {
            let mut gw = vec![0.0; n];
            let mut gb = 0.0;
            let mut total = 0.0;
            for (x, &y) in xs.iter().zip(ys) {
                let s = m.score(x);
                let (l, d) = match loss {
                    LinearLoss::Logistic => (logistic_loss(s, y), sigmoid(s) - y),
                    LinearLoss::Squared => (0.5 * (s - y) * (s - y), s - y),
                    LinearLoss::Hinge => {
                        let t = if y > 0.5 { 1.0 } else { -1.0 };
                        let margin = 1.0 - t * s;
                        if margin > 0.0 {
                            (margin, -t)
                        } else {
                            (0.0, 0.0)
                        }
                    }
                };
                total += l;
                if d != 0.0 {
                    for (g, v) in gw.iter_mut().zip(x) {
                        *g += d * v;
                    }
                    gb += d;
                }
            }
            let reg: f64 = m.weights.iter().map(|w| w * w).sum::<f64>() * 0.5 * l2;
            check_finite(total / count + reg, epoch)?;
            for (w, g) in m.weights.iter_mut().zip(&gw) {
                *w -= learning_rate * (g / count + l2 * *w);
            }
            m.bias -= learning_rate * gb / count;
        }
        Ok(m)
    }
}

pub(crate) fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of logit `s` against target `y` in {0, 1}, computed stably.
pub(crate) fn logistic_loss(s: f64, y: f64) -> f64 {
    let softplus = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
    softplus - y * s
}
