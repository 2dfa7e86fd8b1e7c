//! Experiment configuration.
//!
//! Values come from the built-in defaults, then the `--config` file, then
//! command-line flags, later sources winning. Every stage seed is derived
//! from the global seed by name; seeds written in the file's blocks are
//! replaced when the configuration is resolved, and the defense trains
//! with the `train` block's settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mgmw::attack::AttackConfig;
use mgmw::classifier::{SyntheticSpec, TrainConfig};
use mgmw::defense::{DefenseConfig, BINOMIAL_KERNEL};
use mgmw::metrics::{Bucketing, MetricsOptions};
use mgmw::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub synthetic: SyntheticSpec,
    pub test_per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticSpec::default(),
            test_per_class: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackBlock {
    pub settings: AttackConfig,
    /// Number of test motions attacked, taken round-robin over classes.
    pub targets: usize,
    /// `builtin` or `extern:<command>`.
    pub classifier: String,
}

impl Default for AttackBlock {
    fn default() -> Self {
        Self {
            settings: AttackConfig::default(),
            targets: 50,
            classifier: "builtin".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseBlock {
    pub settings: DefenseConfig,
    /// Attack used to measure robustness of trained models; projection is
    /// always off.
    pub probe: AttackConfig,
    pub probe_targets: usize,
    pub sigmas: Vec<f64>,
    pub kernel: Vec<f64>,
}

impl Default for DefenseBlock {
    fn default() -> Self {
        Self {
            settings: DefenseConfig {
                mu_on: 0.1,
                mu_off: 0.3,
                basar_on_iterations: 1,
                basar_off_iterations: 300,
                warmup_epochs: 10,
                resample_every: 3,
                attack: AttackConfig {
                    epsilon: Some(1e-4),
                    ..AttackConfig::default()
                },
                ..DefenseConfig::default()
            },
            probe: AttackConfig {
                epsilon: Some(1e-4),
                max_iterations: 1000,
                ..AttackConfig::default()
            },
            probe_targets: 20,
            sigmas: vec![0.01, 0.1],
            kernel: BINOMIAL_KERNEL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub metrics: MetricsOptions,
    pub bucketing: Bucketing,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            metrics: MetricsOptions::default(),
            bucketing: Bucketing {
                width: 0.02,
                buckets: 10,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub attack: AttackBlock,
    pub defense: DefenseBlock,
    pub evaluate: EvaluateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            attack: AttackBlock::default(),
            defense: DefenseBlock::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

/// Seeds of the randomized stages under a global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub train_data: u64,
    pub test_data: u64,
    pub train: u64,
    pub attack: u64,
    pub probe: u64,
}

impl StageSeeds {
    pub fn new(seed: u64) -> Self {
        Self {
            train_data: derive_seed(seed, "data/train"),
            test_data: derive_seed(seed, "data/test"),
            train: derive_seed(seed, "train"),
            attack: derive_seed(seed, "attack"),
            probe: derive_seed(seed, "probe"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds::new(self.seed)
    }

    /// Writes the derived stage seeds into the blocks.
    pub fn resolve(mut self) -> Self {
        let s = self.seeds();
        self.train.seed = s.train;
        self.defense.settings.train = TrainConfig {
            seed: s.train,
            ..self.train.clone()
        };
        self.attack.settings.seed = s.attack;
        self.defense.probe.seed = s.probe;
        self
    }

    /// Every violated constraint, one message per field.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        e.extend(self.train.validate());
        e.extend(self.attack.settings.validate());
        if self.attack.targets == 0 {
            e.push("attack.targets: must be at least 1".into());
        }
        let c = &self.attack.classifier;
        if c != "builtin" && !c.strip_prefix("extern:").is_some_and(|cmd| !cmd.trim().is_empty()) {
            e.push(format!(
                "attack.classifier: expected `builtin` or `extern:<command>`, got `{c}`"
            ));
        }
        e.extend(self.defense.settings.validate().into_iter().map(|m| format!("defense: {m}")));
        e.extend(self.defense.probe.validate().into_iter().map(|m| format!("defense.probe: {m}")));
        if self.defense.probe_targets == 0 {
            e.push("defense.probe_targets: must be at least 1".into());
        }
        for s in &self.defense.sigmas {
            if !(*s > 0.0 && s.is_finite()) {
                e.push(format!("defense.sigmas: must be positive, got {s}"));
            }
        }
        let sum: f64 = self.defense.kernel.iter().sum();
        if self.defense.kernel.len() % 2 == 0
            || self.defense.kernel.iter().any(|&k| !(k >= 0.0))
            || (sum - 1.0).abs() > 1e-12
        {
            e.push("defense.kernel: need an odd number of non-negative taps summing to 1".into());
        }
        if self.data.test_per_class == 0 {
            e.push("data.test_per_class: must be at least 1".into());
        }
        let b = &self.evaluate.bucketing;
        if b.buckets == 0 || !(b.width > 0.0) {
            e.push("evaluate.bucketing: need a positive width and at least one bucket".into());
        }
        e
    }
}
