//! The Guided Manifold Walk: a hard-label attack that walks an adversarial
//! motion toward the attacked one along the decision boundary.
//!
//! A run starts from a motion of another class, pulled toward the attacked
//! motion `x` as far as the label allows. Each iteration then
//!
//! 1. perturbs the current adversary `x'` orthogonally to the direction
//!    `d = (x − x')/‖x − x'‖` ([`random_exploration`]), shrinking the step
//!    size `λ` until some candidate stays adversarial;
//! 2. moves the chosen candidate toward `x` by a fraction `β₁`
//!    ([`aimed_probe`]), shrinking `β₁` until the result stays adversarial;
//! 3. every few iterations projects the adversary onto the motion manifold
//!    and, if the projection lost the label, probes from the adversary
//!    toward the projection with a fraction `β₂`.
//!
//! The loop ends when the per-frame deviation `‖x − x'‖/n` drops below `ε`,
//! a shrink loop bottoms out, the iteration limit is reached or the query
//! budget runs out. The returned motion is adversarial in every case.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierHandle, LabeledDataset, LabeledMotion};
use crate::error::{Error, Result};
use crate::manifold::{manifold_project, ProjectionConfig};
use crate::motion::{Motion, Representation};
use crate::seed;
use crate::skeleton::Skeleton;

/// Shrink loops give up once their parameter falls below this.
pub const SHRINK_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackMode {
    Untargeted,
    Targeted { class: usize },
}

impl AttackMode {
    /// Whether `label` fools the classifier for an input of class `original`.
    pub fn satisfied(&self, original: usize, label: usize) -> bool {
        match *self {
            AttackMode::Untargeted => label != original,
            AttackMode::Targeted { class } => label == class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub mode: AttackMode,
    pub max_iterations: usize,
    /// Stop once `‖x − x'‖/n` falls below this; `None` uses the mode's
    /// default (0.1 untargeted, 0.5 targeted).
    pub epsilon: Option<f64>,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Random candidates per exploration round.
    pub explorations: usize,
    /// Upper bound on `λ`.
    pub lambda_cap: f64,
    /// Per-frame weights of the exploration step (one per DoF). `None`
    /// zeroes the spinal joints in position space and uses ones otherwise.
    pub joint_weights: Option<Vec<f64>>,
    pub manifold_projection: bool,
    /// Iterations between manifold projections.
    pub mp_every: usize,
    /// Project once more on exit when the last iteration did not.
    pub final_projection: bool,
    /// Rescale exploration candidates onto the sphere of radius
    /// `‖x − x'‖` around `x` before querying them.
    pub spherical_exploration: bool,
    pub projection: ProjectionConfig,
    /// Maximum label queries per run, including the final verification.
    pub query_budget: Option<u64>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            mode: AttackMode::Untargeted,
            max_iterations: 1000,
            epsilon: None,
            lambda: 0.1,
            beta1: 0.95,
            beta2: 0.95,
            explorations: 5,
            lambda_cap: 0.4,
            joint_weights: None,
            manifold_projection: true,
            mp_every: 100,
            final_projection: true,
            spherical_exploration: true,
            projection: ProjectionConfig::default(),
            query_budget: None,
            seed: 0,
        }
    }
}

/// Largest value `β₁` and `β₂` may grow to.
const BETA_CAP: f64 = 0.99;

impl AttackConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(match self.mode {
            AttackMode::Untargeted => 0.1,
            AttackMode::Targeted { .. } => 0.5,
        })
    }

    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        for (name, v) in [("attack.beta1", self.beta1), ("attack.beta2", self.beta2)] {
            if !(v > 0.0 && v < 1.0) {
                e.push(format!("{name}: must lie in (0, 1), got {v}"));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            e.push(format!("attack.lambda: must be positive, got {}", self.lambda));
        }
        if !(self.lambda_cap > 0.0) {
            e.push(format!(
                "attack.lambda_cap: must be positive, got {}",
                self.lambda_cap
            ));
        }
        if self.explorations == 0 {
            e.push("attack.explorations: must be at least 1".into());
        }
        match self.epsilon {
            Some(v) if !(v > 0.0) => {
                e.push(format!("attack.epsilon: must be positive, got {v}"))
            }
            _ => {}
        }
        if self.mp_every == 0 {
            e.push("attack.mp_every: must be at least 1".into());
        }
        if self.query_budget.is_some_and(|b| b < 2) {
            e.push("attack.query_budget: must allow at least 2 queries".into());
        }
        if let Some(w) = &self.joint_weights {
            if w.iter().any(|v| !v.is_finite()) {
                e.push("attack.joint_weights: must be finite".into());
            }
        }
        e.extend(self.projection.validate());
        e
    }

    fn weights(&self, skeleton: &Skeleton, motion: &Motion) -> Result<Vec<f64>> {
        let w = match &self.joint_weights {
            Some(w) => w.clone(),
            None => match motion.representation() {
                Representation::PositionSpace => skeleton.spinal_mask(),
                Representation::AngleSpace => vec![1.0; motion.dofs()],
            },
        };
        if w.len() != motion.dofs() {
            return Err(Error::DimensionMismatch(format!(
                "{} joint weights for {} dofs",
                w.len(),
                motion.dofs()
            )));
        }
        Ok(w)
    }
}

/// One random exploration candidate with its intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSample {
    pub candidate: Motion,
    /// Raw Gaussian draw `r`.
    pub raw: Array2<f64>,
    /// `R = λ r/‖r‖ ‖x − x'‖`.
    pub scaled: Array2<f64>,
    /// Unit direction from `x'` toward `x`.
    pub direction: Array2<f64>,
    /// `Δ = R − (Rᵀd) d`.
    pub delta: Array2<f64>,
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `q` candidates `x' + WΔ` around `x_prime`, each with `Δ ⟂ (x − x')`.
/// `weights` holds one entry per DoF and applies to every frame.
pub fn random_exploration<R: Rng + ?Sized>(
    x_prime: &Motion,
    x: &Motion,
    lambda: f64,
    weights: &[f64],
    rng: &mut R,
    q: usize,
) -> Result<Vec<PerturbationSample>> {
    x_prime.check_same_shape(x)?;
    if weights.len() != x.dofs() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} dofs",
            weights.len(),
            x.dofs()
        )));
    }
    let diff = x.frames() - x_prime.frames();
    let dist = dot(&diff, &diff).sqrt();
    if dist == 0.0 {
        return Err(Error::InvalidMotion(
            "adversary coincides with the attacked motion".into(),
        ));
    }
    let direction = diff / dist;
    (0..q)
        .map(|_| {
            let raw = Array2::from_shape_simple_fn(x.frames().dim(), || {
                rng.sample::<f64, _>(StandardNormal)
            });
            let norm = dot(&raw, &raw).sqrt();
            let scaled = &raw * (lambda * dist / norm);
            let delta = &scaled - &(&direction * dot(&scaled, &direction));
            let mut frames = x_prime.frames().clone();
            ndarray::Zip::indexed(&mut frames)
                .and(&delta)
                .for_each(|(_, d), f, &dv| *f += weights[d] * dv);
            Ok(PerturbationSample {
                candidate: x_prime.with_frames(frames)?,
                raw,
                scaled,
                direction: direction.clone(),
                delta,
            })
        })
        .collect()
}

/// Multiplicative step-size rule driven by the exploration success rate:
/// −10% below 40%, +10% above 60%, then capped at `cap`.
pub fn adapt_lambda(success_rate: f64, lambda: f64, cap: f64) -> f64 {
    let next = if success_rate < 0.4 {
        lambda * 0.9
    } else if success_rate > 0.6 {
        lambda * 1.1
    } else {
        lambda
    };
    next.min(cap)
}

/// `x' + β(target − x')`.
pub fn aimed_probe(x_prime: &Motion, target: &Motion, beta: f64) -> Result<Motion> {
    x_prime.check_same_shape(target)?;
    let frames = x_prime.frames() + &((target.frames() - x_prime.frames()) * beta);
    x_prime.with_frames(frames)
}

/// `c` moved along the ray from `center` so that `‖c − center‖ = radius`.
fn onto_sphere(c: &Motion, center: &Motion, radius: f64) -> Result<Motion> {
    let d = c.distance(center)?;
    if d == 0.0 || d == radius {
        return Ok(c.clone());
    }
    let k = radius / d;
    c.with_frames(center.frames() + &((c.frames() - center.frames()) * k))
}

fn beta_success(beta: f64) -> f64 {
    (beta * 1.1).min(BETA_CAP)
}

fn beta_failure(beta: f64) -> f64 {
    beta * 0.9
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackStatus {
    /// The deviation fell below `ε`.
    Converged,
    MaxIterations,
    /// No exploration candidate stayed adversarial before `λ` bottomed out.
    ExplorationExhausted,
    /// Aimed probing toward `x` bottomed out.
    ProbeExhausted,
    /// Probing toward the manifold projection bottomed out.
    ProjectionProbeExhausted,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `‖x − x'‖/n` at the end of the iteration.
    pub deviation: f64,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub projected: bool,
    pub adversarial: bool,
    pub queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub original_label: usize,
    pub final_label: usize,
    pub status: AttackStatus,
    pub queries: u64,
    pub deviation: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub adversarial: Motion,
}

/// Hard-label oracle with budget accounting for one run. One query of the
/// budget is held back for the final verification.
struct Oracle<'a> {
    handle: &'a ClassifierHandle,
    start: u64,
    budget: Option<u64>,
    original: usize,
    mode: AttackMode,
}

impl Oracle<'_> {
    fn used(&self) -> u64 {
        self.handle.queries() - self.start
    }

    /// `None` once the budget is spent.
    fn adversarial(&self, m: &Motion) -> Result<Option<bool>> {
        if self.budget.is_some_and(|b| self.used() + 1 >= b) {
            return Ok(None);
        }
        let label = self.handle.predict_label(m)?;
        Ok(Some(self.mode.satisfied(self.original, label)))
    }

    fn label(&self, m: &Motion) -> Result<Option<usize>> {
        if self.budget.is_some_and(|b| self.used() + 1 >= b) {
            return Ok(None);
        }
        Ok(Some(self.handle.predict_label(m)?))
    }
}

enum Probe {
    Found(Motion, f64),
    Exhausted,
    Budget,
}

/// Aimed probing with the shrink loop: tries `β`, `0.9β`, … until the probe
/// is adversarial.
fn probe_loop(oracle: &Oracle<'_>, from: &Motion, target: &Motion, mut beta: f64) -> Result<Probe> {
    loop {
        let cand = aimed_probe(from, target, beta)?;
        match oracle.adversarial(&cand)? {
            None => return Ok(Probe::Budget),
            Some(true) => return Ok(Probe::Found(cand, beta)),
            Some(false) => {
                beta = beta_failure(beta);
                if beta < SHRINK_FLOOR {
                    return Ok(Probe::Exhausted);
                }
            }
        }
    }
}

/// Picks the starting adversary: a dataset motion satisfying the label
/// condition (motions whose dataset label already differs are tried first),
/// pulled toward `x` by aimed probing.
pub fn initialize_adversary<R: Rng + ?Sized>(
    x: &Motion,
    original: usize,
    mode: AttackMode,
    dataset: &LabeledDataset,
    handle: &ClassifierHandle,
    beta1: f64,
    rng: &mut R,
) -> Result<(Motion, f64)> {
    let oracle = Oracle {
        handle,
        start: handle.queries(),
        budget: None,
        original,
        mode,
    };
    Ok(initialize(&oracle, x, dataset, beta1, rng)?.expect("no budget"))
}

fn initialize<R: Rng + ?Sized>(
    oracle: &Oracle<'_>,
    x: &Motion,
    dataset: &LabeledDataset,
    beta1: f64,
    rng: &mut R,
) -> Result<Option<(Motion, f64)>> {
    let prefer = |s: &LabeledMotion| oracle.mode.satisfied(oracle.original, s.label);
    let mut first: Vec<&LabeledMotion> = dataset.samples().iter().filter(|s| prefer(s)).collect();
    let mut rest: Vec<&LabeledMotion> = dataset
        .samples()
        .iter()
        .filter(|s| !prefer(s) && s.motion != *x)
        .collect();
    first.shuffle(rng);
    rest.shuffle(rng);
    for s in first.into_iter().chain(rest) {
        if s.motion.check_same_shape(x).is_err() || s.motion == *x {
            continue;
        }
        match oracle.adversarial(&s.motion)? {
            None => return Ok(None),
            Some(false) => continue,
            Some(true) => {}
        }
        return Ok(match probe_loop(oracle, &s.motion, x, beta1)? {
            Probe::Found(m, b) => Some((m, beta_success(b))),
            Probe::Exhausted => Some((s.motion.clone(), beta1)),
            Probe::Budget => None,
        });
    }
    Err(Error::Solver(
        "initialization failed: no dataset motion satisfies the label condition".into(),
    ))
}

struct Run<'a> {
    oracle: Oracle<'a>,
    skeleton: &'a Skeleton,
    cfg: &'a AttackConfig,
    x: &'a Motion,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
    lambda: f64,
    beta1: f64,
    beta2: f64,
}

enum Step {
    Continue(Motion),
    Stop(AttackStatus),
}

impl Run<'_> {
    /// Exploration with the λ retry loop and the candidate selection rule,
    /// followed by aimed probing of the selected candidate(s).
    fn explore_and_probe(&mut self, current: &Motion) -> Result<Step> {
        let q = self.cfg.explorations;
        let accepted = loop {
            let mut samples =
                random_exploration(current, self.x, self.lambda, &self.weights, &mut self.rng, q)?;
            if self.cfg.spherical_exploration {
                let radius = current.distance(self.x)?;
                for s in &mut samples {
                    s.candidate = onto_sphere(&s.candidate, self.x, radius)?;
                }
            }
            let mut adversarial = Vec::new();
            for s in samples {
                match self.oracle.label(&s.candidate)? {
                    None => return Ok(Step::Stop(AttackStatus::BudgetExhausted)),
                    Some(label) if self.oracle.mode.satisfied(self.oracle.original, label) => {
                        adversarial.push((label, s.candidate))
                    }
                    Some(_) => {}
                }
            }
            let rate = adversarial.len() as f64 / q as f64;
            self.lambda = adapt_lambda(rate, self.lambda, self.cfg.lambda_cap);
            if !adversarial.is_empty() {
                break adversarial;
            }
            if self.lambda < SHRINK_FLOOR {
                return Ok(Step::Stop(AttackStatus::ExplorationExhausted));
            }
        };
        let chosen: Vec<Motion> = match self.oracle.mode {
            AttackMode::Targeted { .. } => {
                let pick = accepted.choose(&mut self.rng).expect("non-empty");
                vec![pick.1.clone()]
            }
            AttackMode::Untargeted => {
                let mut by_class: BTreeMap<usize, Vec<Motion>> = BTreeMap::new();
                for (label, m) in accepted {
                    by_class.entry(label).or_default().push(m);
                }
                by_class
                    .into_values()
                    .map(|ms| ms.choose(&mut self.rng).expect("non-empty").clone())
                    .collect()
            }
        };
        let mut best: Option<(Motion, f64, f64)> = None;
        for cand in chosen {
            match probe_loop(&self.oracle, &cand, self.x, self.beta1)? {
                Probe::Budget => return Ok(Step::Stop(AttackStatus::BudgetExhausted)),
                Probe::Exhausted => {}
                Probe::Found(m, b) => {
                    let d = m.distance(self.x)?;
                    if best.as_ref().is_none_or(|(_, bd, _)| d < *bd) {
                        best = Some((m, d, b));
                    }
                }
            }
        }
        match best {
            Some((m, _, b)) => {
                self.beta1 = beta_success(b);
                Ok(Step::Continue(m))
            }
            None => Ok(Step::Stop(AttackStatus::ProbeExhausted)),
        }
    }

    /// Manifold projection followed by the β₂ probe loop. Returns the new
    /// adversary, or the stop reason with the adversary left unchanged.
    fn project(&mut self, current: &Motion) -> Result<std::result::Result<Motion, AttackStatus>> {
        let (hat, _) = manifold_project(self.skeleton, current, self.x, &self.cfg.projection)?;
        match self.oracle.adversarial(&hat)? {
            None => return Ok(Err(AttackStatus::BudgetExhausted)),
            Some(true) => {
                self.beta2 = beta_success(self.beta2);
                return Ok(Ok(hat));
            }
            Some(false) => {}
        }
        let beta = beta_failure(self.beta2);
        if beta < SHRINK_FLOOR {
            return Ok(Err(AttackStatus::ProjectionProbeExhausted));
        }
        match probe_loop(&self.oracle, current, &hat, beta)? {
            Probe::Budget => Ok(Err(AttackStatus::BudgetExhausted)),
            Probe::Exhausted => Ok(Err(AttackStatus::ProjectionProbeExhausted)),
            Probe::Found(m, b) => {
                self.beta2 = beta_success(b);
                Ok(Ok(m))
            }
        }
    }
}

/// Attacks `x`, whose true label is `label`, with the Guided Manifold Walk.
///
/// Fails with [`Error::Misclassified`] when the handle already mislabels
/// `x`, and with a solver error when no dataset motion can seed the run.
/// The reported query count equals the handle's counter delta.
pub fn gmw_attack(
    handle: &ClassifierHandle,
    x: &Motion,
    label: usize,
    dataset: &LabeledDataset,
    skeleton: &Skeleton,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    if let AttackMode::Targeted { class } = cfg.mode {
        if class >= handle.classes() {
            return Err(Error::LabelOutOfRange {
                label: class,
                classes: handle.classes(),
            });
        }
    }
    let weights = cfg.weights(skeleton, x)?;
    let start = handle.queries();
    let predicted = handle.predict_label(x)?;
    if predicted != label {
        return Err(Error::Misclassified { label, predicted });
    }
    if let AttackMode::Targeted { class } = cfg.mode {
        if class == label {
            return Err(Error::InvalidConfig(vec![format!(
                "attack.mode: target class {class} is the motion's own label"
            )]));
        }
    }
    let mut run = Run {
        oracle: Oracle {
            handle,
            start,
            budget: cfg.query_budget,
            original: label,
            mode: cfg.mode,
        },
        skeleton,
        cfg,
        x,
        weights,
        rng: seed::stage_rng(cfg.seed, "gmw"),
        lambda: cfg.lambda.min(cfg.lambda_cap),
        beta1: cfg.beta1,
        beta2: cfg.beta2,
    };
    let n = x.n_frames() as f64;
    let epsilon = cfg.epsilon();
    let mut init_rng = seed::stage_rng(cfg.seed, "init");
    let Some((mut current, beta1)) = initialize(&run.oracle, x, dataset, cfg.beta1, &mut init_rng)?
    else {
        return Err(Error::Solver(
            "query budget exhausted before an adversarial start was found".into(),
        ));
    };
    run.beta1 = beta1;
    let mut trace = Vec::new();
    let mut status = AttackStatus::MaxIterations;
    let mut last_projected = false;
    let mut iterations = 0;
    if current.distance(x)? / n < epsilon {
        status = AttackStatus::Converged;
    } else {
        for k in 1..=cfg.max_iterations {
            iterations = k;
            match run.explore_and_probe(&current)? {
                Step::Continue(m) => current = m,
                Step::Stop(s) => {
                    status = s;
                    break;
                }
            }
            let mut projected = false;
            if cfg.manifold_projection && k % cfg.mp_every == 0 {
                projected = true;
                match run.project(&current)? {
                    Ok(m) => current = m,
                    Err(s) => {
                        status = s;
                        last_projected = false;
                        push_trace(&mut trace, k, &current, x, &run, projected)?;
                        break;
                    }
                }
            }
            last_projected = projected;
            push_trace(&mut trace, k, &current, x, &run, projected)?;
            if current.distance(x)? / n < epsilon {
                status = AttackStatus::Converged;
                break;
            }
        }
    }
    if cfg.manifold_projection
        && cfg.final_projection
        && !last_projected
        && status != AttackStatus::BudgetExhausted
    {
        match run.project(&current)? {
            Ok(m) => current = m,
            Err(AttackStatus::BudgetExhausted) => status = AttackStatus::BudgetExhausted,
            Err(_) => {}
        }
    }
    let final_label = handle.predict_label(&current)?;
    debug_assert!(cfg.mode.satisfied(label, final_label));
    Ok(AttackResult {
        original_label: label,
        final_label,
        status,
        queries: handle.queries() - start,
        deviation: current.distance(x)? / n,
        iterations,
        trace,
        adversarial: current,
    })
}

fn push_trace(
    trace: &mut Vec<TraceEntry>,
    k: usize,
    current: &Motion,
    x: &Motion,
    run: &Run<'_>,
    projected: bool,
) -> Result<()> {
    trace.push(TraceEntry {
        iteration: k,
        deviation: current.distance(x)? / x.n_frames() as f64,
        lambda: run.lambda,
        beta1: run.beta1,
        beta2: run.beta2,
        projected,
        adversarial: true,
        queries: run.oracle.used(),
    });
    Ok(())
}

/// Outcome of one motion in a batch attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum BatchEntry {
    Attacked {
        index: usize,
        result: AttackResult,
    },
    /// The classifier already mislabels the motion.
    Skipped {
        index: usize,
        label: usize,
        predicted: usize,
    },
    Failed {
        index: usize,
        message: String,
    },
}

impl BatchEntry {
    pub fn index(&self) -> usize {
        match self {
            BatchEntry::Attacked { index, .. }
            | BatchEntry::Skipped { index, .. }
            | BatchEntry::Failed { index, .. } => *index,
        }
    }

    pub fn result(&self) -> Option<&AttackResult> {
        match self {
            BatchEntry::Attacked { result, .. } => Some(result),
            _ => None,
        }
    }
}

/// Attacks every motion of `targets` in parallel. Run `i` uses the seed
/// `item_seed(cfg.seed, i)` and its own forked handle, so results do not
/// depend on the number of worker threads.
pub fn attack_batch(
    handle: &ClassifierHandle,
    targets: &[LabeledMotion],
    dataset: &LabeledDataset,
    skeleton: &Skeleton,
    cfg: &AttackConfig,
) -> Vec<BatchEntry> {
    targets
        .par_iter()
        .enumerate()
        .map(|(index, t)| {
            let run_cfg = AttackConfig {
                seed: seed::item_seed(cfg.seed, index as u64),
                ..cfg.clone()
            };
            let h = handle.fork();
            match gmw_attack(&h, &t.motion, t.label, dataset, skeleton, &run_cfg) {
                Ok(result) => BatchEntry::Attacked { index, result },
                Err(Error::Misclassified { label, predicted }) => BatchEntry::Skipped {
                    index,
                    label,
                    predicted,
                },
                Err(e) => BatchEntry::Failed {
                    index,
                    message: e.to_string(),
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn pm(rows: Array2<f64>) -> Motion {
        Motion::new(Representation::PositionSpace, rows).unwrap()
    }

    #[test]
    fn probe_midpoint() {
        let a = pm(array![[0.0, 0.0]]);
        let b = pm(array![[2.0, 4.0]]);
        assert_eq!(aimed_probe(&a, &b, 0.5).unwrap().frames(), &array![[1.0, 2.0]]);
        assert_eq!(aimed_probe(&a, &b, 0.0).unwrap(), a);
        assert_eq!(aimed_probe(&a, &b, 1.0).unwrap(), b);
    }

    #[test]
    fn lambda_rule_table() {
        assert!((adapt_lambda(0.2, 0.1, 0.4) - 0.09).abs() < 1e-15);
        assert_eq!(adapt_lambda(0.5, 0.1, 0.4), 0.1);
        assert_eq!(adapt_lambda(1.0, 1.45, 1.5), 1.5);
        assert_eq!(adapt_lambda(0.4, 0.3, 0.4), 0.3);
        assert_eq!(adapt_lambda(0.6, 0.3, 0.4), 0.3);
    }

    #[test]
    fn exploration_is_orthogonal_and_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xp = pm(array![[0.0, 1.0, 2.0], [1.0, 0.5, -1.0]]);
        let x = pm(array![[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]]);
        let w = [1.0, 0.0, 1.0];
        for s in random_exploration(&xp, &x, 0.3, &w, &mut rng, 10).unwrap() {
            let nd = dot(&s.delta, &s.delta).sqrt();
            assert!(dot(&s.delta, &s.direction).abs() <= 1e-9 * nd);
            let expect = 0.3 * xp.distance(&x).unwrap();
            assert!((dot(&s.scaled, &s.scaled).sqrt() - expect).abs() < 1e-12);
            for t in 0..2 {
                assert_eq!(s.candidate.frames()[[t, 1]], xp.frames()[[t, 1]]);
            }
        }
    }

    #[test]
    fn zero_lambda_leaves_adversary_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xp = pm(array![[0.0, 1.0]]);
        let x = pm(array![[1.0, 1.0]]);
        for s in random_exploration(&xp, &x, 0.0, &[1.0, 1.0], &mut rng, 3).unwrap() {
            assert_eq!(s.candidate, xp);
        }
    }

    #[test]
    fn coincident_motions_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = pm(array![[1.0, 1.0]]);
        assert!(random_exploration(&x, &x, 0.1, &[1.0, 1.0], &mut rng, 1).is_err());
    }
}
