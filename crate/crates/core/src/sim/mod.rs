//! Discrete-event simulation of whole training runs.

mod engine;
pub mod output;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fl::{
    accuracy, init_model, load_idx_dataset, local_loss, partition_dataset, synthetic_dataset,
    LabeledDataset, LearnerKind, LearnerSpec, ModelParams, PartitionMode, SyntheticSpec,
    TrainConfig,
};
use crate::link::LinkParams;
use crate::orbital::{ConstellationSpec, NodeSpec};
use crate::propagation::PayloadSizes;
use crate::rng::derive_seed;

pub use engine::simulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Async,
    Sync,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        num_classes: usize,
        limit: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerSettings {
    pub kind: LearnerKind,
    pub hidden_dim: usize,
    pub init_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Termination {
    pub target_accuracy: Option<f64>,
    pub max_epochs: Option<u64>,
    /// Simulated-time horizon, s. Always set.
    pub max_sim_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub constellation: ConstellationSpec,
    pub nodes: Vec<NodeSpec>,
    pub link: LinkParams,
    pub learner: LearnerSettings,
    /// `rng_seed` is ignored; every training call derives its own.
    pub train: TrainConfig,
    pub data: DataSource,
    pub partition: PartitionMode,
    pub test_fraction: f64,
    pub mode: Mode,
    pub sync_relay: bool,
    pub termination: Termination,
    pub gap_fraction: f64,
    /// Collection window W_c, s.
    pub collection_window: f64,
    /// Time a satellite spends on one local training job, s.
    pub compute_delay: f64,
    pub master_seed: u64,
    pub visibility_step: f64,
    pub payload: PayloadSizes,
}

/// One evaluation of the global model. Field names are the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sim_time_s: f64,
    pub epoch: u64,
    pub test_accuracy: f64,
    pub global_loss: f64,
    pub models_aggregated: usize,
    pub stale_selected: usize,
    pub groups: usize,
    /// Cumulative bits put on any link.
    pub bytes_transferred: f64,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub time: f64,
    pub seq: u64,
    pub kind: &'static str,
    pub src: Option<String>,
    pub dst: Option<String>,
    pub payload_bits: f64,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub metrics: Vec<MetricsRecord>,
    pub events: Vec<LogRecord>,
    /// Human-readable notes, e.g. a stalled synchronous round.
    pub diagnostics: Vec<String>,
}

impl RunOutput {
    /// Simulated time of the first record at or above `target`.
    pub fn time_to_accuracy(&self, target: f64) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.test_accuracy >= target)
            .map(|m| m.sim_time_s)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.test_accuracy)
    }
}

/// Everything derived from the configuration before the clock starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub learner: LearnerSpec,
    /// Local datasets in `ConstellationSpec::satellites()` order.
    pub partitions: Vec<LabeledDataset>,
    pub test: LabeledDataset,
    pub initial_model: ModelParams,
}

impl Prepared {
    pub fn total_data(&self) -> usize {
        self.partitions.iter().map(LabeledDataset::len).sum()
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    match &cfg.data {
        DataSource::Synthetic(spec) => {
            synthetic_dataset(spec, derive_seed(cfg.master_seed, "data", &[]))
        }
        DataSource::Idx {
            images,
            labels,
            num_classes,
            limit,
        } => load_idx_dataset(images, labels, *num_classes, limit.unwrap_or(usize::MAX)),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let data = load_dataset(cfg)?;
    let (train, test) =
        data.split_holdout(cfg.test_fraction, derive_seed(cfg.master_seed, "split", &[]))?;
    let partitions = partition_dataset(
        &train,
        &cfg.constellation,
        cfg.partition,
        derive_seed(cfg.master_seed, "partition", &[]),
    )?;
    let mut learner = match cfg.learner.kind {
        LearnerKind::SoftmaxRegression => LearnerSpec::softmax(data.input_dim, data.num_classes),
        LearnerKind::MlpOneHidden => {
            LearnerSpec::mlp(data.input_dim, cfg.learner.hidden_dim, data.num_classes)
        }
    };
    learner.init_scale = cfg.learner.init_scale;
    learner.init_seed = derive_seed(cfg.master_seed, "init", &[]);
    let initial_model = init_model(&learner)?;
    Ok(Prepared {
        learner,
        partitions,
        test,
        initial_model,
    })
}

/// Accuracy and mean cross-entropy of `model` on the held-out set.
pub fn evaluate_global(
    spec: &LearnerSpec,
    model: &ModelParams,
    test: &LabeledDataset,
) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(invalid("empty test set"));
    }
    Ok((accuracy(spec, model, test)?, local_loss(spec, model, test)?))
}

/// Runs `cfg` in whichever mode it names.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let prepared = prepare(cfg)?;
    simulate(cfg, &prepared)
}

pub fn run_async(cfg: &RunConfig) -> Result<Vec<MetricsRecord>> {
    let cfg = RunConfig {
        mode: Mode::Async,
        ..cfg.clone()
    };
    Ok(run(&cfg)?.metrics)
}

pub fn run_sync(cfg: &RunConfig) -> Result<Vec<MetricsRecord>> {
    let cfg = RunConfig {
        mode: Mode::Sync,
        ..cfg.clone()
    };
    Ok(run(&cfg)?.metrics)
}

/// Seed of the local training job of `sat` on global version `version`.
pub fn training_seed(master: u64, orbit: usize, slot: usize, version: u64) -> u64 {
    derive_seed(master, "train", &[orbit as u64, slot as u64, version])
}
