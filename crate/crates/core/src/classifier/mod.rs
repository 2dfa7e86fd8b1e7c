//! Built-in classifier, synthetic data, training and hard-label handles.

mod dataset;
mod gradient;
mod handle;
mod model;
mod train;

pub use dataset::{
    generate_synthetic_dataset, generate_synthetic_dataset_with, LabeledDataset, LabeledMotion,
    Split, SyntheticSpec,
};
pub use gradient::{input_gradient, LossSpec};
pub use handle::ClassifierHandle;
pub use model::{ClassifierModel, Layer, Normalization};
pub use train::{
    accuracy, batch_loss, fit, initial_model, train_classifier, AuxTerm, EpochPlan, EpochStats,
    TrainConfig, TrainReport,
};
