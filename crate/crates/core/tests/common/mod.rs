#![allow(dead_code)]

use mgmw::classifier::{
    generate_synthetic_dataset, generate_synthetic_dataset_with, train_classifier,
    ClassifierModel, LabeledDataset, Normalization, Split, SyntheticSpec, TrainConfig,
};
use mgmw::{Representation, Skeleton};

pub struct Fixture {
    pub skeleton: Skeleton,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub model: ClassifierModel,
}

/// Humanoid data with 4 classes, 30 training and 15 test motions per class,
/// and the built-in classifier trained on it with default settings.
pub fn fixture() -> Fixture {
    let skeleton = Skeleton::humanoid();
    let train = generate_synthetic_dataset(&skeleton, 4, 30, 1).unwrap();
    let spec = SyntheticSpec { per_class: 15, ..SyntheticSpec::default() };
    let test = generate_synthetic_dataset_with(&skeleton, &spec, 2, Split::Test).unwrap();
    let (model, _) = train_classifier(&train, &TrainConfig::default()).unwrap();
    Fixture { skeleton, train, test, model }
}

/// Two classes over `frames × dofs` position motions: class 1 exactly when
/// the values of DoF 0 sum to a positive number.
pub fn sign_model(frames: usize, dofs: usize) -> ClassifierModel {
    let zeros = ClassifierModel::zeros(
        frames,
        dofs,
        2,
        Representation::PositionSpace,
        &[1],
        Normalization::identity(dofs),
    )
    .unwrap();
    let mut v = serde_json::to_value(&zeros).unwrap();
    let hidden = v["layers"][0]["weights"]["data"].as_array_mut().unwrap();
    for (i, w) in hidden.iter_mut().enumerate() {
        if i % dofs == 0 {
            *w = 1.0.into();
        }
    }
    v["layers"][1]["weights"]["data"] = serde_json::json!([0.0, 1.0]);
    serde_json::from_value(v).unwrap()
}
