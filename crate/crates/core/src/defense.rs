//! Adversarial training defenses.
//!
//! MMAT trains on a mix of clean motions, on-manifold adversaries and
//! off-manifold adversaries:
//!
//! ```text
//! min_θ E[ μ_c CE(x, y) + μ_on CE(x'_on, y) + μ_off CE(x'_off, y) ],   μ_c = 1 − μ_on − μ_off
//! ```
//!
//! The adversaries are resampled against the model being trained, either
//! with the hard-label attack (on-manifold with projection, off-manifold
//! without) or with the white-box SMART sampler, which minimizes
//!
//! ```text
//! L(x') = w·Σ_c Φ(x)_c log Φ(x')_c + (1 − w)·L_p(x, x')
//! L_p   = α·l_dyn + (1 − α)·l_bl
//! l_bl  = (1/n) Σ_t ‖BL_t(x) − BL_t(x')‖²
//! l_dyn = Σ_k β_k ‖γ(Dᵏx − Dᵏx')‖²,   k = 0, 1, 2
//! ```
//!
//! with sign-of-gradient steps. `Dᵏ` are unscaled forward (`k = 1`) and
//! central (`k = 2`) differences and `γ` is a per-DoF diagonal weight.
//!
//! The Gaussian-smoothing baseline adds `N(0, σ²)` noise to every sample,
//! filters it along time and trains on clean and noisy copies.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{attack_batch, AttackConfig, BatchEntry};
use crate::classifier::{
    fit, input_gradient, ClassifierHandle, ClassifierModel, EpochPlan, AuxTerm,
    LabeledDataset, LabeledMotion, LossSpec, TrainConfig, TrainReport,
};
use crate::error::{Error, Result};
use crate::kinematics::{
    bone_lengths, check_on_manifold, first_difference, first_difference_adjoint,
    second_difference, second_difference_adjoint, ManifoldTolerance,
};
use crate::manifold::{manifold_project, ProjectionConfig};
use crate::metrics::{batch_metrics, MetricsOptions, MetricsReport};
use crate::motion::{Motion, Representation};
use crate::seed;
use crate::skeleton::Skeleton;

/// The 1×5 binomial approximation of a Gaussian.
pub const BINOMIAL_KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmartConfig {
    /// Loss mix `w` when sampling on-manifold adversaries.
    pub w_on: f64,
    /// Loss mix `w` when sampling off-manifold adversaries.
    pub w_off: f64,
    /// Step size of the sign update.
    pub step: f64,
    pub iterations: usize,
    /// Halvings of the step tried before a run stops.
    pub max_halvings: usize,
    pub alpha: f64,
    /// Weights of derivative orders 0, 1 and 2.
    pub betas: [f64; 3],
    /// Per-DoF diagonal of `γ`; identity when absent.
    pub gamma: Option<Vec<f64>>,
}

impl Default for SmartConfig {
    fn default() -> Self {
        Self {
            w_on: 0.6,
            w_off: 1.0,
            step: 0.02,
            iterations: 50,
            max_halvings: 8,
            alpha: 0.3,
            betas: [0.2, 0.3, 0.5],
            gamma: None,
        }
    }
}

impl SmartConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        for (name, v) in [("smart.w_on", self.w_on), ("smart.w_off", self.w_off)] {
            if !(0.0..=1.0).contains(&v) {
                e.push(format!("{name}: must lie in [0, 1], got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            e.push(format!("smart.alpha: must lie in [0, 1], got {}", self.alpha));
        }
        if self.iterations == 0 {
            e.push("smart.iterations: must be at least 1".into());
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            e.push(format!("smart.step: must be positive, got {}", self.step));
        }
        if self.betas.iter().any(|&b| !(b >= 0.0)) {
            e.push("smart.betas: must be non-negative".into());
        }
        let sum: f64 = self.betas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            e.push(format!("smart.betas: must sum to 1, got {sum}"));
        }
        if let Some(g) = &self.gamma {
            if g.iter().any(|v| !v.is_finite()) {
                e.push("smart.gamma: must be finite".into());
            }
        }
        e
    }

    fn gamma_squared(&self, dofs: usize) -> Result<Vec<f64>> {
        match &self.gamma {
            None => Ok(vec![1.0; dofs]),
            Some(g) if g.len() == dofs => Ok(g.iter().map(|v| v * v).collect()),
            Some(g) => Err(Error::DimensionMismatch(format!(
                "gamma has {} entries for {dofs} dofs",
                g.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmartMode {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Basar,
    Smart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseConfig {
    pub train: TrainConfig,
    pub mu_on: f64,
    pub mu_off: f64,
    pub sampler: Sampler,
    /// Attack iterations (with projection) per on-manifold adversary.
    pub basar_on_iterations: usize,
    /// Attack iterations (without projection) per off-manifold adversary.
    pub basar_off_iterations: usize,
    /// Base settings of the hard-label sampler; iteration counts, projection
    /// switches and seeds are overridden.
    pub attack: AttackConfig,
    pub smart: SmartConfig,
    /// Clean-only epochs before adversaries enter the loss.
    pub warmup_epochs: usize,
    /// Epochs between adversary resampling rounds.
    pub resample_every: usize,
    pub tolerance: ManifoldTolerance,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            mu_on: 0.2,
            mu_off: 0.2,
            sampler: Sampler::Basar,
            basar_on_iterations: 500,
            basar_off_iterations: 1,
            attack: AttackConfig::default(),
            smart: SmartConfig::default(),
            warmup_epochs: 0,
            resample_every: 1,
            tolerance: ManifoldTolerance::default(),
        }
    }
}

impl DefenseConfig {
    pub fn mu_c(&self) -> f64 {
        1.0 - self.mu_on - self.mu_off
    }

    pub fn validate(&self) -> Vec<String> {
        let mut e = self.train.validate();
        for (name, v) in [("defense.mu_on", self.mu_on), ("defense.mu_off", self.mu_off)] {
            if !(0.0..=1.0).contains(&v) {
                e.push(format!("{name}: must lie in [0, 1], got {v}"));
            }
        }
        if self.mu_on + self.mu_off > 1.0 {
            e.push(format!(
                "defense.mu_on + defense.mu_off: must not exceed 1, got {}",
                self.mu_on + self.mu_off
            ));
        }
        if self.basar_on_iterations == 0 {
            e.push("defense.basar_on_iterations: must be at least 1".into());
        }
        if self.basar_off_iterations == 0 {
            e.push("defense.basar_off_iterations: must be at least 1".into());
        }
        if self.resample_every == 0 {
            e.push("defense.resample_every: must be at least 1".into());
        }
        e.extend(self.attack.validate());
        e.extend(self.smart.validate());
        e
    }

    fn adversarial(&self) -> bool {
        self.mu_on > 0.0 || self.mu_off > 0.0
    }
}

fn sq(a: &Array2<f64>, b: &Array2<f64>, g2: &[f64]) -> f64 {
    let mut s = 0.0;
    for ((t, d), v) in a.indexed_iter() {
        let r = v - b[[t, d]];
        s += g2[d] * r * r;
    }
    s
}

fn weighted_residual(a: &Array2<f64>, b: &Array2<f64>, g2: &[f64], scale: f64) -> Array2<f64> {
    let mut out = a - b;
    for ((_, d), v) in out.indexed_iter_mut() {
        *v *= scale * g2[d];
    }
    out
}

/// `l_bl` and its gradient w.r.t. `x'`. Zero for joint-angle motions, whose
/// bone lengths are fixed by the skeleton.
fn bone_term(skeleton: &Skeleton, x: &Motion, xp: &Motion) -> Result<(f64, Array2<f64>)> {
    let mut grad = Array2::zeros(xp.frames().dim());
    if xp.representation() == Representation::AngleSpace {
        return Ok((0.0, grad));
    }
    let (bx, bxp) = (bone_lengths(skeleton, x)?, bone_lengths(skeleton, xp)?);
    let n = x.n_frames() as f64;
    let f = xp.frames();
    let mut value = 0.0;
    for t in 0..x.n_frames() {
        for (b, &joint) in skeleton.bone_joints().iter().enumerate() {
            let r = bxp[[t, b]] - bx[[t, b]];
            value += r * r;
            let len = bxp[[t, b]];
            if len == 0.0 {
                continue;
            }
            let p = skeleton.parent(joint).expect("bones have parents");
            for c in 0..3 {
                let u = (f[[t, 3 * joint + c]] - f[[t, 3 * p + c]]) / len;
                grad[[t, 3 * joint + c]] += 2.0 * r * u / n;
                grad[[t, 3 * p + c]] -= 2.0 * r * u / n;
            }
        }
    }
    Ok((value / n, grad))
}

/// `l_dyn` and its gradient w.r.t. `x'`.
fn dynamics_term(x: &Motion, xp: &Motion, cfg: &SmartConfig) -> Result<(f64, Array2<f64>)> {
    let g2 = cfg.gamma_squared(x.dofs())?;
    let (a, b) = (x.frames(), xp.frames());
    let n = x.n_frames();
    let [b0, b1, b2] = cfg.betas;
    let mut value = b0 * sq(b, a, &g2);
    let mut grad = weighted_residual(b, a, &g2, 2.0 * b0);
    if n >= 2 {
        let (da, db) = (first_difference(a), first_difference(b));
        value += b1 * sq(&db, &da, &g2);
        grad += &first_difference_adjoint(&weighted_residual(&db, &da, &g2, 2.0 * b1), n);
    }
    if n >= 3 {
        let (da, db) = (second_difference(a), second_difference(b));
        value += b2 * sq(&db, &da, &g2);
        grad += &second_difference_adjoint(&weighted_residual(&db, &da, &g2, 2.0 * b2));
    }
    Ok((value, grad))
}

/// Perceptual loss `α·l_dyn + (1 − α)·l_bl` and its gradient w.r.t. `x'`.
pub fn perceptual_loss_gradient(
    x: &Motion,
    x_prime: &Motion,
    skeleton: &Skeleton,
    cfg: &SmartConfig,
) -> Result<(f64, Array2<f64>)> {
    x.check_same_shape(x_prime)?;
    let (dyn_v, dyn_g) = dynamics_term(x, x_prime, cfg)?;
    let (bl_v, bl_g) = bone_term(skeleton, x, x_prime)?;
    let a = cfg.alpha;
    Ok((a * dyn_v + (1.0 - a) * bl_v, dyn_g * a + bl_g * (1.0 - a)))
}

pub fn perceptual_loss(
    x: &Motion,
    x_prime: &Motion,
    skeleton: &Skeleton,
    cfg: &SmartConfig,
) -> Result<f64> {
    Ok(perceptual_loss_gradient(x, x_prime, skeleton, cfg)?.0)
}

/// SMART objective with mix `w` and its gradient w.r.t. `x'`.
/// `clean_scores` is `Φ(x)`.
pub fn smart_objective(
    model: &ClassifierModel,
    x: &Motion,
    x_prime: &Motion,
    clean_scores: &Array1<f64>,
    skeleton: &Skeleton,
    cfg: &SmartConfig,
    w: f64,
) -> Result<(f64, Array2<f64>)> {
    let loss = LossSpec::NegatedCrossEntropy {
        clean_scores: clean_scores.clone(),
    };
    let (c, gc) = input_gradient(model, x_prime, &loss)?;
    if w == 1.0 {
        return Ok((c, gc));
    }
    let (p, gp) = perceptual_loss_gradient(x, x_prime, skeleton, cfg)?;
    Ok((w * c + (1.0 - w) * p, gc * w + gp * (1.0 - w)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmartOutcome {
    pub motion: Motion,
    pub adversarial: bool,
    /// Objective after the opening step and after every accepted step.
    pub losses: Vec<f64>,
}

fn sign_step(x: &Motion, grad: &Array2<f64>, step: f64) -> Result<Motion> {
    let mut f = x.frames().clone();
    ndarray::Zip::from(&mut f).and(grad).for_each(|v, &g| {
        if g != 0.0 {
            *v -= step * g.signum();
        }
    });
    x.with_frames(f)
}

/// White-box sign-gradient minimization of the SMART objective. The clean
/// motion is a stationary point of the objective, so the run starts with
/// one unconditional step up the cross-entropy of the predicted label. After
/// that a step is accepted only if it does not increase the objective;
/// failing that at every halving ends the run.
pub fn smart_attack(
    model: &ClassifierModel,
    x: &Motion,
    skeleton: &Skeleton,
    cfg: &SmartConfig,
    mode: SmartMode,
) -> Result<SmartOutcome> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    let w = match mode {
        SmartMode::On => cfg.w_on,
        SmartMode::Off => cfg.w_off,
    };
    let p = model.predict_scores(x)?;
    let predicted = model.predict(x)?;
    let objective = |m: &Motion| -> Result<(f64, Array2<f64>)> {
        let (v, g) = smart_objective(model, x, m, &p, skeleton, cfg, w)?;
        if !v.is_finite() {
            return Err(Error::Solver(format!("SMART objective is {v}")));
        }
        Ok((v, g))
    };
    let (_, kick) = input_gradient(model, x, &LossSpec::CrossEntropy { label: predicted })?;
    let mut current = sign_step(x, &kick.mapv(|v| -v), cfg.step)?;
    let (mut value, mut grad) = objective(&current)?;
    let mut losses = vec![value];
    for _ in 1..cfg.iterations {
        let mut step = cfg.step;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let candidate = sign_step(&current, &grad, step)?;
            let (v, g) = objective(&candidate)?;
            if v <= value {
                accepted = Some((candidate, v, g));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((c, v, g)) => {
                current = c;
                value = v;
                grad = g;
                losses.push(v);
            }
            None => break,
        }
    }
    let adversarial = model.predict(&current)? != predicted;
    Ok(SmartOutcome {
        motion: current,
        adversarial,
        losses,
    })
}

/// Sampler bookkeeping for one resampling round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub epoch: usize,
    pub batch: usize,
    pub on_count: usize,
    pub off_count: usize,
    /// On-manifold candidates dropped by the manifold check.
    pub rejected: usize,
    /// Elements the classifier already mislabels.
    pub skipped: usize,
    pub failed: usize,
    pub on_mean_deviation: Option<f64>,
    pub off_mean_deviation: Option<f64>,
    pub on_bone_deviation: Option<f64>,
    pub off_bone_deviation: Option<f64>,
}

/// Adversaries indexed like the sampled batch.
#[derive(Debug, Clone)]
pub struct AdversarySets {
    pub on: Vec<Option<Motion>>,
    pub off: Vec<Option<Motion>>,
    pub stats: SamplerStats,
}

fn relative_bone_deviation(skeleton: &Skeleton, x: &Motion, xp: &Motion) -> Result<f64> {
    if x.representation() == Representation::AngleSpace {
        return Ok(0.0);
    }
    let (b, bp) = (bone_lengths(skeleton, x)?, bone_lengths(skeleton, xp)?);
    Ok(b.iter()
        .zip(bp.iter())
        .map(|(a, c)| (c - a).abs() / a)
        .sum::<f64>()
        / b.len().max(1) as f64)
}

fn summarize(
    batch: &[LabeledMotion],
    set: &[Option<Motion>],
    skeleton: &Skeleton,
) -> Result<(usize, Option<f64>, Option<f64>)> {
    let mut count = 0;
    let (mut dev, mut bone) = (0.0, 0.0);
    for (s, m) in batch.iter().zip(set) {
        if let Some(m) = m {
            count += 1;
            dev += s.motion.mean_frame_deviation(m)?;
            bone += relative_bone_deviation(skeleton, &s.motion, m)?;
        }
    }
    let c = count as f64;
    Ok(if count == 0 {
        (0, None, None)
    } else {
        (count, Some(dev / c), Some(bone / c))
    })
}

fn basar_set(
    model: &ClassifierModel,
    batch: &[LabeledMotion],
    pool: &LabeledDataset,
    skeleton: &Skeleton,
    cfg: AttackConfig,
) -> (Vec<Option<Motion>>, usize, usize) {
    let handle = ClassifierHandle::builtin(model.clone());
    let entries = attack_batch(&handle, batch, pool, skeleton, &cfg);
    let mut out = vec![None; batch.len()];
    let (mut skipped, mut failed) = (0, 0);
    for e in entries {
        match e {
            BatchEntry::Attacked { index, result } => out[index] = Some(result.adversarial),
            BatchEntry::Skipped { .. } => skipped += 1,
            BatchEntry::Failed { index, message } => {
                log::warn!("sampler failed on element {index}: {message}");
                failed += 1;
            }
        }
    }
    (out, skipped, failed)
}

/// SMART adversaries for `batch`. On-manifold outputs are passed through
/// the manifold projection when `projection` is given.
fn smart_set(
    model: &ClassifierModel,
    batch: &[LabeledMotion],
    skeleton: &Skeleton,
    cfg: &SmartConfig,
    mode: SmartMode,
    projection: Option<&ProjectionConfig>,
) -> (Vec<Option<Motion>>, usize, usize) {
    let runs: Vec<Result<Option<Motion>>> = batch
        .par_iter()
        .map(|s| {
            if model.predict(&s.motion)? != s.label {
                return Ok(None);
            }
            let m = smart_attack(model, &s.motion, skeleton, cfg, mode)?.motion;
            match projection {
                Some(p) => Ok(Some(manifold_project(skeleton, &m, &s.motion, p)?.0)),
                None => Ok(Some(m)),
            }
        })
        .collect();
    let mut out = Vec::with_capacity(batch.len());
    let (mut skipped, mut failed) = (0, 0);
    for (i, r) in runs.into_iter().enumerate() {
        match r {
            Ok(Some(m)) => out.push(Some(m)),
            Ok(None) => {
                skipped += 1;
                out.push(None);
            }
            Err(e) => {
                log::warn!("sampler failed on element {i}: {e}");
                failed += 1;
                out.push(None);
            }
        }
    }
    (out, skipped, failed)
}

/// Draws on- and off-manifold adversaries for every element of `batch`
/// against `model`. On-manifold candidates that fail the manifold check
/// are dropped; SMART on-manifold candidates are projected first. Elements
/// the model already mislabels or the sampler fails on are left empty.
/// `pool` seeds the hard-label attack's starting points.
pub fn sample_adversaries(
    model: &ClassifierModel,
    batch: &[LabeledMotion],
    pool: &LabeledDataset,
    skeleton: &Skeleton,
    cfg: &DefenseConfig,
    seed: u64,
) -> Result<AdversarySets> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    let ((mut on, skipped, f_on), (off, _, f_off)) = match cfg.sampler {
        Sampler::Basar => {
            let on_cfg = AttackConfig {
                max_iterations: cfg.basar_on_iterations,
                manifold_projection: true,
                final_projection: true,
                seed: seed::derive_seed(seed, "on"),
                ..cfg.attack.clone()
            };
            let off_cfg = AttackConfig {
                max_iterations: cfg.basar_off_iterations,
                manifold_projection: false,
                final_projection: false,
                seed: seed::derive_seed(seed, "off"),
                ..cfg.attack.clone()
            };
            (
                basar_set(model, batch, pool, skeleton, on_cfg),
                basar_set(model, batch, pool, skeleton, off_cfg),
            )
        }
        Sampler::Smart => (
            smart_set(model, batch, skeleton, &cfg.smart, SmartMode::On, Some(&cfg.attack.projection)),
            smart_set(model, batch, skeleton, &cfg.smart, SmartMode::Off, None),
        ),
    };
    let mut rejected = 0;
    for slot in on.iter_mut() {
        if let Some(m) = slot {
            if !check_on_manifold(skeleton, m, &cfg.tolerance)?.on_manifold {
                *slot = None;
                rejected += 1;
            }
        }
    }
    let (on_count, on_dev, on_bone) = summarize(batch, &on, skeleton)?;
    let (off_count, off_dev, off_bone) = summarize(batch, &off, skeleton)?;
    Ok(AdversarySets {
        on,
        off,
        stats: SamplerStats {
            epoch: 0,
            batch: batch.len(),
            on_count,
            off_count,
            rejected,
            skipped,
            failed: f_on + f_off,
            on_mean_deviation: on_dev,
            off_mean_deviation: off_dev,
            on_bone_deviation: on_bone,
            off_bone_deviation: off_bone,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmatReport {
    pub train: TrainReport,
    pub sampler: Vec<SamplerStats>,
}

/// Mixed-manifold adversarial training. Adversaries are drawn against the
/// live model at the start of every `resample_every`-th epoch after the
/// warmup and reused until the next round. With `μ_on = μ_off = 0` no
/// sampling happens and the result equals standard training.
pub fn mmat_train(
    train: &LabeledDataset,
    cfg: &DefenseConfig,
) -> Result<(ClassifierModel, MmatReport)> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    let skeleton = train.skeleton().clone();
    let base = seed::derive_seed(cfg.train.seed, "adversaries");
    let mut stats = Vec::new();
    let mut sets: Option<(Vec<Option<Motion>>, Vec<Option<Motion>>)> = None;
    let (model, report) = fit(train, &cfg.train, |epoch, model| {
        if !cfg.adversarial() || epoch < cfg.warmup_epochs {
            return Ok(EpochPlan::clean());
        }
        if (epoch - cfg.warmup_epochs) % cfg.resample_every == 0 {
            let s = sample_adversaries(
                model,
                train.samples(),
                train,
                &skeleton,
                cfg,
                seed::item_seed(base, epoch as u64),
            )?;
            log::info!(
                "epoch {epoch}: {} on-manifold, {} off-manifold adversaries ({} rejected)",
                s.stats.on_count,
                s.stats.off_count,
                s.stats.rejected
            );
            stats.push(SamplerStats { epoch, ..s.stats });
            sets = Some((s.on, s.off));
        }
        let (on, off) = sets.clone().expect("sampled above");
        Ok(EpochPlan {
            clean_weight: cfg.mu_c(),
            aux: vec![
                AuxTerm {
                    weight: cfg.mu_on,
                    samples: on,
                },
                AuxTerm {
                    weight: cfg.mu_off,
                    samples: off,
                },
            ],
        })
    })?;
    Ok((
        model,
        MmatReport {
            train: report,
            sampler: stats,
        },
    ))
}

/// Convolves every DoF with `kernel` along time, replicating the edge
/// frames.
pub fn temporal_filter(motion: &Motion, kernel: &[f64]) -> Result<Motion> {
    check_kernel(kernel)?;
    let f = motion.frames();
    let (n, m) = f.dim();
    let half = (kernel.len() / 2) as isize;
    let mut out = Array2::zeros((n, m));
    for t in 0..n {
        for (k, &c) in kernel.iter().enumerate() {
            let s = (t as isize + k as isize - half).clamp(0, n as isize - 1) as usize;
            for d in 0..m {
                out[[t, d]] += c * f[[s, d]];
            }
        }
    }
    motion.with_frames(out)
}

fn check_kernel(kernel: &[f64]) -> Result<()> {
    let sum: f64 = kernel.iter().sum();
    if kernel.len() % 2 == 0 || kernel.iter().any(|&c| !(c >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(vec![format!(
            "kernel: need an odd number of non-negative taps summing to 1, got {kernel:?}"
        )]));
    }
    Ok(())
}

/// `temporal_filter(x + n)` with `n ~ N(0, σ²I)`.
pub fn noisy_sample<R: Rng + ?Sized>(
    motion: &Motion,
    sigma: f64,
    kernel: &[f64],
    rng: &mut R,
) -> Result<Motion> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(vec![e.to_string()]))?;
    let noisy = motion.frames().mapv(|v| v + normal.sample(rng));
    temporal_filter(&motion.with_frames(noisy)?, kernel)
}

/// Trains on every clean sample plus one fresh noisy copy per epoch, each
/// with weight 1. Noise comes from the `noise` stream of the training seed.
pub fn gaussian_smoothing_train(
    train: &LabeledDataset,
    sigma: f64,
    kernel: &[f64],
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, TrainReport)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig(vec![format!(
            "sigma: must be positive, got {sigma}"
        )]));
    }
    check_kernel(kernel)?;
    let base = seed::derive_seed(cfg.seed, "noise");
    fit(train, cfg, |epoch, _| {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
            seed::item_seed(base, epoch as u64),
        );
        let samples = train
            .samples()
            .iter()
            .map(|s| noisy_sample(&s.motion, sigma, kernel, &mut rng).map(Some))
            .collect::<Result<Vec<_>>>()?;
        Ok(EpochPlan {
            clean_weight: 1.0,
            aux: vec![AuxTerm {
                weight: 1.0,
                samples,
            }],
        })
    })
}

/// Hard-label attack without projection against `model` on `targets`, as
/// used to measure robustness after training.
pub fn robustness_probe(
    model: &ClassifierModel,
    targets: &[LabeledMotion],
    pool: &LabeledDataset,
    skeleton: &Skeleton,
    cfg: &AttackConfig,
) -> Result<MetricsReport> {
    let cfg = AttackConfig {
        manifold_projection: false,
        final_projection: false,
        ..cfg.clone()
    };
    let handle = ClassifierHandle::builtin(model.clone());
    let entries = attack_batch(&handle, targets, pool, skeleton, &cfg);
    batch_metrics(&entries, targets, skeleton, &MetricsOptions::default())
}
