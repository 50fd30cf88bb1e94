//! Federated-learning primitives: learners, datasets, local SGD and FedAvg.

pub mod dataset;
pub mod idx;
pub mod model;
pub mod train;

pub use dataset::{
    non_iid_families, partition_dataset, synthetic_dataset, LabeledDataset, PartitionMode,
    SyntheticSpec,
};
pub use idx::{load_idx_dataset, parse_idx_images, parse_idx_labels};
pub use model::{init_model, LearnerKind, LearnerSpec, ModelParams};
pub use train::{
    accuracy, batch_gradient, fedavg, global_objective, local_loss, local_train, LocalSteps,
    TrainConfig,
};
