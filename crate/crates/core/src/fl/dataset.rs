use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::orbital::ConstellationSpec;
use crate::rng;

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub input_dim: usize,
    pub num_classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(
        input_dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(invalid("dataset input_dim must be >= 1"));
        }
        if features.len() != labels.len() * input_dim {
            return Err(invalid(format!(
                "{} feature values do not form {} rows of width {}",
                features.len(),
                labels.len(),
                input_dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(invalid(format!("label {bad} >= num_classes {num_classes}")));
        }
        Ok(Self {
            input_dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn empty_like(&self) -> Self {
        Self {
            input_dim: self.input_dim,
            num_classes: self.num_classes,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn push(&mut self, row: &[f64], label: usize) {
        self.features.extend_from_slice(row);
        self.labels.push(label);
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = self.empty_like();
        for &i in indices {
            out.push(self.row(i), self.labels[i]);
        }
        out
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a LabeledDataset>) -> Option<Self> {
        let mut iter = parts.into_iter();
        let mut out = iter.next()?.clone();
        for p in iter {
            out.features.extend_from_slice(&p.features);
            out.labels.extend_from_slice(&p.labels);
        }
        Some(out)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Seeded shuffle, then the first `round(fraction * n)` rows become the
    /// held-out part. Returns `(train, test)`.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(invalid("test fraction must be in [0, 1)"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut rng::from_seed(seed));
        let n_test = (fraction * self.len() as f64).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

/// Gaussian-mixture data: one centre per class drawn uniformly from
/// `[center_low, center_high]^d`, isotropic noise, features clipped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_samples: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    pub noise_std: f64,
    pub center_low: f64,
    pub center_high: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_samples: 5000,
            input_dim: 16,
            num_classes: 10,
            noise_std: 0.15,
            center_low: 0.2,
            center_high: 0.8,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 || self.input_dim == 0 || self.num_classes < 2 {
            return Err(invalid(
                "synthetic data needs num_samples >= 1, input_dim >= 1, num_classes >= 2",
            ));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(invalid("synthetic noise_std must be >= 0"));
        }
        if !(0.0 <= self.center_low && self.center_low <= self.center_high && self.center_high <= 1.0)
        {
            return Err(invalid("synthetic centres must satisfy 0 <= low <= high <= 1"));
        }
        Ok(())
    }
}

/// Balanced classes: sample `i` has label `i mod num_classes`.
pub fn synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = rng::from_seed(seed);
    let (d, c) = (spec.input_dim, spec.num_classes);
    let centers: Vec<f64> = (0..c * d)
        .map(|_| {
            if spec.center_high > spec.center_low {
                rng.random_range(spec.center_low..spec.center_high)
            } else {
                spec.center_low
            }
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| invalid(e.to_string()))?;
    let mut out = LabeledDataset {
        input_dim: d,
        num_classes: c,
        features: Vec::with_capacity(spec.num_samples * d),
        labels: Vec::with_capacity(spec.num_samples),
    };
    for i in 0..spec.num_samples {
        let label = i % c;
        for j in 0..d {
            let v = centers[label * d + j] + noise.sample(&mut rng);
            out.features.push(v.clamp(0.0, 1.0));
        }
        out.labels.push(label);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    #[default]
    NonIid,
}

/// Orbits `0..k` hold classes `0..m`, the rest hold `m..C`, where
/// `k = ceil(2 O / 5)` and `m = ceil(0.4 C)`. A single orbit holds everything.
pub fn non_iid_families(num_orbits: usize, num_classes: usize) -> (usize, usize) {
    if num_orbits <= 1 {
        return (num_orbits, num_classes);
    }
    let k = (2 * num_orbits).div_ceil(5);
    let m = (2 * num_classes).div_ceil(5);
    (k, m)
}

/// Splits `data` across every satellite of `spec`, in `satellites()` order.
pub fn partition_dataset(
    data: &LabeledDataset,
    spec: &ConstellationSpec,
    mode: PartitionMode,
    seed: u64,
) -> Result<Vec<LabeledDataset>> {
    let n_sats = spec.num_satellites();
    if n_sats == 0 {
        return Err(invalid("constellation has no satellites"));
    }
    let mut rng = rng::from_seed(seed);
    let mut out = vec![data.empty_like(); n_sats];
    match mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng);
            deal(data, &idx, &mut out, &(0..n_sats).collect::<Vec<_>>())?;
        }
        PartitionMode::NonIid => {
            let (k, m) = non_iid_families(spec.num_orbits(), data.num_classes);
            let first_family: Vec<usize> = spec
                .satellites()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.orbit < k)
                .map(|(i, _)| i)
                .collect();
            let second_family: Vec<usize> = (0..n_sats).filter(|i| !first_family.contains(i)).collect();
            let mut low: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] < m).collect();
            let mut high: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] >= m).collect();
            low.shuffle(&mut rng);
            high.shuffle(&mut rng);
            deal(data, &low, &mut out, &first_family)?;
            if !high.is_empty() || !second_family.is_empty() {
                deal(data, &high, &mut out, &second_family)?;
            }
        }
    }
    Ok(out)
}

/// Contiguous even split of `order` over `targets`; the first `n mod k`
/// targets take one extra row.
fn deal(
    data: &LabeledDataset,
    order: &[usize],
    out: &mut [LabeledDataset],
    targets: &[usize],
) -> Result<()> {
    if targets.is_empty() || order.len() < targets.len() {
        return Err(invalid(format!(
            "insufficient data: {} samples for {} satellites",
            order.len(),
            targets.len()
        )));
    }
    let base = order.len() / targets.len();
    let extra = order.len() % targets.len();
    let mut start = 0;
    for (i, &t) in targets.iter().enumerate() {
        let take = base + usize::from(i < extra);
        out[t] = data.subset(&order[start..start + take]);
        start += take;
    }
    Ok(())
}
