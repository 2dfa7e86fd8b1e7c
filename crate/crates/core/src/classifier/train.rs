//! Mini-batch training with Adam on a weighted sum of cross-entropy terms.
//!
//! Plain training, the mixed-manifold defense and Gaussian-smoothing
//! training all run through [`fit`]: each epoch a plan supplies the weight
//! of the clean term and any auxiliary per-sample motions (adversaries,
//! noisy copies) with their own weights. A batch loss is
//!
//! ```text
//! clean_weight · mean CE(clean batch) + Σ weightₐ · mean CE(auxₐ batch)
//! ```
//!
//! where each auxiliary mean runs over the batch members that have a motion.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::model::{softmax, ClassifierModel, Layer, Normalization};
use crate::error::{Error, Result};
use crate::motion::Motion;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32],
            epochs: 40,
            batch_size: 16,
            learning_rate: 3e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            e.push("train.hidden: need at least one positive width".into());
        }
        if self.batch_size == 0 {
            e.push("train.batch_size: must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            e.push(format!(
                "train.learning_rate: must be positive, got {}",
                self.learning_rate
            ));
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    /// Number of available motions in each auxiliary term.
    pub aux_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_accuracy: f64,
}

/// Per-sample motions entering the loss with their own weight.
#[derive(Debug, Clone)]
pub struct AuxTerm {
    pub weight: f64,
    /// Indexed like the training set; `None` leaves the sample out.
    pub samples: Vec<Option<Motion>>,
}

/// Loss composition for one epoch.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    pub clean_weight: f64,
    pub aux: Vec<AuxTerm>,
}

impl EpochPlan {
    /// Standard cross-entropy on the clean data only.
    pub fn clean() -> Self {
        Self {
            clean_weight: 1.0,
            aux: Vec::new(),
        }
    }
}

/// Mean cross-entropy of `motions` against `labels` and its gradient w.r.t.
/// the logits, scaled by `weight`.
fn ce_term(
    model: &ClassifierModel,
    motions: &[&Motion],
    labels: &[usize],
    weight: f64,
) -> Result<(f64, Vec<Layer>, usize)> {
    let inputs = model.encode_batch(motions.iter().copied())?;
    let acts = model.forward(inputs);
    let b = motions.len();
    let mut dlogits = Array2::zeros(acts.logits.dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for i in 0..b {
        let z = acts.logits.row(i);
        let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        loss -= z[labels[i]] - max - z.mapv(|v| (v - max).exp()).sum().ln();
        let p = softmax(z);
        if super::model::argmax(p.view()) == labels[i] {
            correct += 1;
        }
        let mut row = p;
        row[labels[i]] -= 1.0;
        dlogits.row_mut(i).assign(&(row * (weight / b as f64)));
    }
    let (grads, _) = model.backward(&acts, dlogits);
    Ok((weight * loss / b as f64, grads, correct))
}

/// The weighted batch objective and its parameter gradient.
pub fn batch_loss(
    model: &ClassifierModel,
    clean: &[&Motion],
    labels: &[usize],
    clean_weight: f64,
    aux: &[(f64, Vec<(&Motion, usize)>)],
) -> Result<(f64, Vec<Layer>)> {
    let (mut loss, mut grads, _) = ce_term(model, clean, labels, clean_weight)?;
    for (weight, members) in aux {
        if *weight == 0.0 || members.is_empty() {
            continue;
        }
        let motions: Vec<&Motion> = members.iter().map(|(m, _)| *m).collect();
        let ls: Vec<usize> = members.iter().map(|(_, l)| *l).collect();
        let (l, g, _) = ce_term(model, &motions, &ls, *weight)?;
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(g) {
            acc.weights += &gi.weights;
            acc.bias += &gi.bias;
        }
    }
    Ok((loss, grads))
}

struct Adam {
    lr: f64,
    step: i32,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &ClassifierModel, lr: f64) -> Self {
        let zeros: Vec<Layer> = model
            .layers()
            .iter()
            .map(|l| Layer {
                weights: Array2::zeros(l.weights.dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        Self {
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn apply(&mut self, model: &mut ClassifierModel, grads: &[Layer]) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        let lr = self.lr;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        };
        for (((layer, g), m), v) in model
            .layers_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

/// The model `fit` starts from: normalization fitted to the training
/// motions, weights drawn from the `init` stream of `cfg.seed`.
pub fn initial_model(train: &LabeledDataset, cfg: &TrainConfig) -> Result<ClassifierModel> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let normalization = Normalization::fit(train.samples().iter().map(|s| &s.motion))?;
    let rep = train.representation().expect("non-empty");
    let mut rng = seed::stage_rng(cfg.seed, "init");
    ClassifierModel::new_random(
        train.n_frames(),
        train.dofs(),
        train.classes(),
        rep,
        &cfg.hidden,
        normalization,
        &mut rng,
    )
}

/// Trains from [`initial_model`], asking `plan` for the loss composition at
/// the start of every epoch. Batches are drawn from the `shuffle` stream of
/// `cfg.seed`, so the result is deterministic given the seed and the plans.
pub fn fit<F>(
    train: &LabeledDataset,
    cfg: &TrainConfig,
    mut plan: F,
) -> Result<(ClassifierModel, TrainReport)>
where
    F: FnMut(usize, &ClassifierModel) -> Result<EpochPlan>,
{
    let mut model = initial_model(train, cfg)?;
    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut rng = seed::stage_rng(cfg.seed, "shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let samples = train.samples();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let plan = plan(epoch, &model)?;
        for a in &plan.aux {
            if a.samples.len() != train.len() {
                return Err(Error::DimensionMismatch(format!(
                    "auxiliary term has {} entries for {} samples",
                    a.samples.len(),
                    train.len()
                )));
            }
        }
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let clean: Vec<&Motion> = chunk.iter().map(|&i| &samples[i].motion).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| samples[i].label).collect();
            let aux: Vec<(f64, Vec<(&Motion, usize)>)> = plan
                .aux
                .iter()
                .map(|a| {
                    (
                        a.weight,
                        chunk
                            .iter()
                            .filter_map(|&i| a.samples[i].as_ref().map(|m| (m, samples[i].label)))
                            .collect(),
                    )
                })
                .collect();
            let (loss, grads) = batch_loss(&model, &clean, &labels, plan.clean_weight, &aux)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam.apply(&mut model, &grads);
            total += loss;
            batches += 1;
        }
        let loss = total / batches.max(1) as f64;
        let train_accuracy = accuracy(&model, train)?;
        log::debug!("epoch {epoch}: loss {loss:.5} train acc {train_accuracy:.4}");
        epochs.push(EpochStats {
            epoch,
            loss,
            train_accuracy,
            aux_counts: plan
                .aux
                .iter()
                .map(|a| a.samples.iter().filter(|s| s.is_some()).count())
                .collect(),
        });
    }
    let train_accuracy = accuracy(&model, train)?;
    Ok((
        model,
        TrainReport {
            epochs,
            train_accuracy,
        },
    ))
}

/// Standard cross-entropy training.
pub fn train_classifier(
    train: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport)> {
    fit(train, cfg, |_, _| Ok(EpochPlan::clean()))
}

/// Fraction of samples the model labels correctly (uncounted access).
pub fn accuracy(model: &ClassifierModel, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut correct = 0;
    for s in data.samples() {
        if model.predict(&s.motion)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
