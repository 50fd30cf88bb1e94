use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fl::dataset::LabeledDataset;
use crate::fl::model::{LearnerSpec, ModelParams, Scratch};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LocalSteps {
    /// `local_iters` counts mini-batch SGD steps.
    #[default]
    Iterations,
    /// `local_iters` counts passes over the local dataset.
    Epochs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub local_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: LocalSteps,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            local_iters: 100,
            batch_size: 32,
            learning_rate: 0.01,
            steps: LocalSteps::Iterations,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_iters == 0 || self.batch_size == 0 {
            return Err(invalid("local_iters and batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid("learning_rate must be finite and >= 0"));
        }
        Ok(())
    }
}

fn check_data(spec: &LearnerSpec, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(invalid("empty dataset"));
    }
    if data.input_dim != spec.input_dim {
        return Err(invalid(format!(
            "dataset width {} does not match learner input_dim {}",
            data.input_dim, spec.input_dim
        )));
    }
    if data.num_classes > spec.num_classes {
        return Err(invalid("dataset has more classes than the learner"));
    }
    Ok(())
}

/// Mean cross-entropy of `model` over `data`.
pub fn local_loss(spec: &LearnerSpec, model: &ModelParams, data: &LabeledDataset) -> Result<f64> {
    spec.check_model(model)?;
    check_data(spec, data)?;
    let mut scratch = Scratch::new(spec);
    let total: f64 = (0..data.len())
        .map(|i| spec.sample_loss(&model.weights, data.row(i), data.labels[i], &mut scratch))
        .sum();
    Ok(total / data.len() as f64)
}

/// Data-size-weighted mean of the per-satellite losses. Empty datasets carry
/// zero weight.
pub fn global_objective(
    spec: &LearnerSpec,
    model: &ModelParams,
    datasets: &[LabeledDataset],
) -> Result<f64> {
    let total: usize = datasets.iter().map(LabeledDataset::len).sum();
    if total == 0 {
        return Err(invalid("all datasets are empty"));
    }
    let mut acc = 0.0;
    for d in datasets.iter().filter(|d| !d.is_empty()) {
        acc += d.len() as f64 / total as f64 * local_loss(spec, model, d)?;
    }
    Ok(acc)
}

/// Mean gradient of the cross-entropy over the rows `batch` of `data`.
pub fn batch_gradient(
    spec: &LearnerSpec,
    model: &ModelParams,
    data: &LabeledDataset,
    batch: &[usize],
) -> Result<Vec<f64>> {
    spec.check_model(model)?;
    check_data(spec, data)?;
    let mut grad = vec![0.0; spec.dim()];
    let mut scratch = Scratch::new(spec);
    let scale = 1.0 / batch.len() as f64;
    for &i in batch {
        spec.accumulate_gradient(
            &model.weights,
            data.row(i),
            data.labels[i],
            scale,
            &mut grad,
            &mut scratch,
        );
    }
    Ok(grad)
}

/// Mini-batch SGD from `model`. Batches are drawn sequentially from a seeded
/// permutation of the local rows, reshuffled whenever fewer than a full batch
/// remain. `batch_size` is clamped to the dataset size.
pub fn local_train(
    spec: &LearnerSpec,
    model: &ModelParams,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    spec.check_model(model)?;
    check_data(spec, data)?;
    cfg.validate()?;
    let n = data.len();
    let b = cfg.batch_size.min(n);
    let iters = match cfg.steps {
        LocalSteps::Iterations => cfg.local_iters,
        LocalSteps::Epochs => cfg.local_iters * n.div_ceil(b),
    };
    let mut rng = rng::from_seed(cfg.rng_seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut w = model.weights.clone();
    let mut grad = vec![0.0; w.len()];
    let mut scratch = Scratch::new(spec);
    let scale = 1.0 / b as f64;
    for _ in 0..iters {
        if cursor + b > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for &i in &order[cursor..cursor + b] {
            spec.accumulate_gradient(&w, data.row(i), data.labels[i], scale, &mut grad, &mut scratch);
        }
        cursor += b;
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= cfg.learning_rate * gi;
        }
    }
    Ok(ModelParams::new(w, model.derived_from_epoch))
}

/// Data-size-weighted average of models. Inputs are summed in a canonical
/// order so the result is bitwise independent of the input order. The output
/// version is one past the newest input.
pub fn fedavg(updates: &[(ModelParams, usize)]) -> Result<ModelParams> {
    let first = updates
        .first()
        .ok_or_else(|| invalid("fedavg needs at least one model"))?;
    let dim = first.0.dim();
    if updates.iter().any(|(m, _)| m.dim() != dim) {
        return Err(invalid("fedavg over models of different dimensions"));
    }
    let total: usize = updates.iter().map(|(_, s)| s).sum();
    if total == 0 {
        return Err(invalid("fedavg total data size is zero"));
    }
    let mut order: Vec<&(ModelParams, usize)> = updates.iter().collect();
    order.sort_by(|a, b| canonical_cmp(a, b));
    let mut out = vec![0.0; dim];
    for (m, size) in order {
        let k = *size as f64 / total as f64;
        for (o, w) in out.iter_mut().zip(&m.weights) {
            *o += k * w;
        }
    }
    let epoch = updates.iter().map(|(m, _)| m.derived_from_epoch).max().unwrap_or(0);
    Ok(ModelParams::new(out, epoch + 1))
}

fn canonical_cmp(a: &(ModelParams, usize), b: &(ModelParams, usize)) -> Ordering {
    a.1.cmp(&b.1)
        .then(a.0.derived_from_epoch.cmp(&b.0.derived_from_epoch))
        .then_with(|| {
            a.0.weights
                .iter()
                .zip(&b.0.weights)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Fraction of rows whose predicted class equals the label.
pub fn accuracy(spec: &LearnerSpec, model: &ModelParams, data: &LabeledDataset) -> Result<f64> {
    spec.check_model(model)?;
    check_data(spec, data)?;
    let mut scratch = Scratch::new(spec);
    let hits = (0..data.len())
        .filter(|&i| spec.predict(&model.weights, data.row(i), &mut scratch) == data.labels[i])
        .count();
    Ok(hits as f64 / data.len() as f64)
}
