//! Flat-parameter learners: multinomial softmax regression and a one-hidden-layer
//! tanh MLP, both trained with cross-entropy on a softmax output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

/// A flat weight vector plus the global version it was trained from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub derived_from_epoch: u64,
}

impl ModelParams {
    pub fn new(weights: Vec<f64>, derived_from_epoch: u64) -> Self {
        Self {
            weights,
            derived_from_epoch,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim], 0)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn distance(&self, other: &ModelParams) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(invalid(format!(
                "dimension mismatch: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[default]
    SoftmaxRegression,
    MlpOneHidden,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Hidden width; ignored by softmax regression.
    pub hidden_dim: usize,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl LearnerSpec {
    pub fn softmax(input_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: LearnerKind::SoftmaxRegression,
            input_dim,
            num_classes,
            hidden_dim: 0,
            init_seed: 0,
            init_scale: 0.0,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self {
            kind: LearnerKind::MlpOneHidden,
            hidden_dim,
            ..Self::softmax(input_dim, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(invalid("learner dims must be >= 1"));
        }
        if self.kind == LearnerKind::MlpOneHidden && self.hidden_dim == 0 {
            return Err(invalid("mlp hidden_dim must be >= 1"));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(invalid("init_scale must be a finite non-negative number"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        let (d, c, h) = (self.input_dim, self.num_classes, self.hidden_dim);
        match self.kind {
            LearnerKind::SoftmaxRegression => c * d + c,
            LearnerKind::MlpOneHidden => h * d + h + c * h + c,
        }
    }

    pub(crate) fn check_model(&self, model: &ModelParams) -> Result<()> {
        if model.dim() != self.dim() {
            return Err(invalid(format!(
                "model has {} weights, learner expects {}",
                model.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Class scores (pre-softmax) for one sample.
    pub fn logits(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut scratch = Scratch::new(self);
        self.forward(w, x, &mut scratch);
        scratch.logits
    }

    fn forward(&self, w: &[f64], x: &[f64], s: &mut Scratch) {
        let (d, c, h) = (self.input_dim, self.num_classes, self.hidden_dim);
        match self.kind {
            LearnerKind::SoftmaxRegression => {
                let (wm, b) = w.split_at(c * d);
                for k in 0..c {
                    s.logits[k] = b[k] + dot(&wm[k * d..(k + 1) * d], x);
                }
            }
            LearnerKind::MlpOneHidden => {
                let (w1, rest) = w.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                for j in 0..h {
                    s.hidden[j] = (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh();
                }
                for k in 0..c {
                    s.logits[k] = b2[k] + dot(&w2[k * h..(k + 1) * h], &s.hidden);
                }
            }
        }
    }

    /// Cross-entropy of one sample; adds `scale * gradient` into `grad`.
    pub(crate) fn accumulate_gradient(
        &self,
        w: &[f64],
        x: &[f64],
        label: usize,
        scale: f64,
        grad: &mut [f64],
        s: &mut Scratch,
    ) -> f64 {
        self.forward(w, x, s);
        let loss = softmax_in_place(&s.logits, &mut s.probs, label);
        let (d, c, h) = (self.input_dim, self.num_classes, self.hidden_dim);
        // dL/dlogit_k = p_k - [k == label]
        for k in 0..c {
            s.delta[k] = s.probs[k] - if k == label { 1.0 } else { 0.0 };
        }
        match self.kind {
            LearnerKind::SoftmaxRegression => {
                let (gw, gb) = grad.split_at_mut(c * d);
                for k in 0..c {
                    let dk = scale * s.delta[k];
                    for (g, xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += dk * xi;
                    }
                    gb[k] += dk;
                }
            }
            LearnerKind::MlpOneHidden => {
                let w2 = &w[h * d + h..h * d + h + c * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                for j in 0..h {
                    let back: f64 = (0..c).map(|k| s.delta[k] * w2[k * h + j]).sum();
                    s.hidden_delta[j] = back * (1.0 - s.hidden[j] * s.hidden[j]);
                }
                for k in 0..c {
                    let dk = scale * s.delta[k];
                    for (g, hj) in gw2[k * h..(k + 1) * h].iter_mut().zip(&s.hidden) {
                        *g += dk * hj;
                    }
                    gb2[k] += dk;
                }
                for j in 0..h {
                    let dj = scale * s.hidden_delta[j];
                    for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *g += dj * xi;
                    }
                    gb1[j] += dj;
                }
            }
        }
        loss
    }

    /// Cross-entropy of one sample.
    pub(crate) fn sample_loss(&self, w: &[f64], x: &[f64], label: usize, s: &mut Scratch) -> f64 {
        self.forward(w, x, s);
        softmax_in_place(&s.logits, &mut s.probs, label)
    }

    /// Predicted class: argmax of the scores, lowest index on ties.
    pub(crate) fn predict(&self, w: &[f64], x: &[f64], s: &mut Scratch) -> usize {
        self.forward(w, x, s);
        let mut best = 0;
        for k in 1..self.num_classes {
            if s.logits[k] > s.logits[best] {
                best = k;
            }
        }
        best
    }
}

/// Per-call work buffers so the hot loops do not allocate.
pub(crate) struct Scratch {
    logits: Vec<f64>,
    probs: Vec<f64>,
    delta: Vec<f64>,
    hidden: Vec<f64>,
    hidden_delta: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(spec: &LearnerSpec) -> Self {
        let c = spec.num_classes;
        let h = match spec.kind {
            LearnerKind::SoftmaxRegression => 0,
            LearnerKind::MlpOneHidden => spec.hidden_dim,
        };
        Self {
            logits: vec![0.0; c],
            probs: vec![0.0; c],
            delta: vec![0.0; c],
            hidden: vec![0.0; h],
            hidden_delta: vec![0.0; h],
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes softmax(logits) into `probs` and returns `-ln probs[label]`.
fn softmax_in_place(logits: &[f64], probs: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    // log-sum-exp form keeps the loss finite for confident wrong answers
    max + sum.ln() - logits[label]
}

/// Initial global model: weights uniform in `[-init_scale, init_scale]`.
pub fn init_model(spec: &LearnerSpec) -> Result<ModelParams> {
    spec.validate()?;
    let mut rng = rng::from_seed(spec.init_seed);
    let scale = spec.init_scale;
    let weights = (0..spec.dim())
        .map(|_| {
            if scale == 0.0 {
                0.0
            } else {
                rng.random_range(-scale..=scale)
            }
        })
        .collect();
    Ok(ModelParams::new(weights, 0))
}
