//! Labeled motion sets and the synthetic generator used at desk scale.
//!
//! Class `k` is a family of angle trajectories: every swing angle follows a
//! sinusoid whose frequency, amplitude, phase and center come from a class
//! template; each sample jitters the template and adds small noise, and is
//! then posed with forward kinematics. Templates depend only on the
//! generator settings, so train and test sets drawn with different seeds
//! share the same classes.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{self, ManifoldTolerance};
use crate::motion::{Motion, Representation};
use crate::seed;
use crate::skeleton::{Skeleton, ROOT_DOFS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledMotion {
    pub label: usize,
    pub motion: Motion,
}

/// Motions of one skeleton and frame count with labels in `0..classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct LabeledDataset {
    skeleton: Skeleton,
    classes: usize,
    n_frames: usize,
    split: Split,
    seed: u64,
    samples: Vec<LabeledMotion>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    skeleton: Skeleton,
    classes: usize,
    n_frames: usize,
    split: Split,
    seed: u64,
    samples: Vec<LabeledMotion>,
}

impl TryFrom<DatasetRepr> for LabeledDataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        LabeledDataset::new(r.skeleton, r.classes, r.n_frames, r.split, r.seed, r.samples)
    }
}

impl From<LabeledDataset> for DatasetRepr {
    fn from(d: LabeledDataset) -> Self {
        Self {
            skeleton: d.skeleton,
            classes: d.classes,
            n_frames: d.n_frames,
            split: d.split,
            seed: d.seed,
            samples: d.samples,
        }
    }
}

impl LabeledDataset {
    /// Validates labels and shapes. Motions may be in either representation
    /// but all must share one.
    pub fn new(
        skeleton: Skeleton,
        classes: usize,
        n_frames: usize,
        split: Split,
        seed: u64,
        samples: Vec<LabeledMotion>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig(vec![format!(
                "classes: need at least 2, got {classes}"
            )]));
        }
        let rep = samples.first().map(|s| s.motion.representation());
        for (i, s) in samples.iter().enumerate() {
            if s.label >= classes {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    classes,
                });
            }
            let dofs = match s.motion.representation() {
                Representation::AngleSpace => skeleton.angle_dofs(),
                Representation::PositionSpace => skeleton.position_dofs(),
            };
            if Some(s.motion.representation()) != rep
                || s.motion.n_frames() != n_frames
                || s.motion.dofs() != dofs
            {
                return Err(Error::DimensionMismatch(format!(
                    "sample {i}: {:?} {}x{}, dataset expects {:?} {}x{dofs}",
                    s.motion.representation(),
                    s.motion.n_frames(),
                    s.motion.dofs(),
                    rep,
                    n_frames
                )));
            }
        }
        Ok(Self {
            skeleton,
            classes,
            n_frames,
            split,
            seed,
            samples,
        })
    }

    /// Like [`LabeledDataset::new`] but resamples every motion to `n_frames`.
    pub fn from_resampled(
        skeleton: Skeleton,
        classes: usize,
        n_frames: usize,
        split: Split,
        seed: u64,
        samples: Vec<LabeledMotion>,
    ) -> Result<Self> {
        let samples = samples
            .into_iter()
            .map(|s| {
                Ok(LabeledMotion {
                    label: s.label,
                    motion: s.motion.resample(n_frames)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(skeleton, classes, n_frames, split, seed, samples)
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> &[LabeledMotion] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn representation(&self) -> Option<Representation> {
        self.samples.first().map(|s| s.motion.representation())
    }

    pub fn dofs(&self) -> usize {
        match self.representation() {
            Some(Representation::AngleSpace) => self.skeleton.angle_dofs(),
            _ => self.skeleton.position_dofs(),
        }
    }

    /// A dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Settings of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub n_frames: usize,
    /// Seed of the class templates (shared by train and test sets).
    pub template_seed: u64,
    /// Largest template amplitude as a fraction of each joint's half range.
    pub amplitude: f64,
    /// Largest template center offset as a fraction of the half range.
    pub center: f64,
    /// Per-sample amplitude jitter (relative) and phase jitter (radians).
    pub amplitude_jitter: f64,
    pub phase_jitter: f64,
    /// Standard deviation of the per-frame angle noise; clipped at 3σ.
    pub noise: f64,
    /// Amplitude of the root sway, in length units.
    pub root_sway: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 4,
            per_class: 30,
            n_frames: 24,
            template_seed: 0x5eed,
            amplitude: 0.45,
            center: 0.25,
            amplitude_jitter: 0.15,
            phase_jitter: 0.3,
            noise: 0.01,
            root_sway: 0.05,
        }
    }
}

struct Template {
    frequency: f64,
    centers: Vec<f64>,
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

fn templates(skeleton: &Skeleton, spec: &SyntheticSpec) -> Vec<Template> {
    let mut rng = seed::stage_rng(spec.template_seed, "templates");
    let lo = skeleton.limits_min();
    let hi = skeleton.limits_max();
    (0..spec.classes)
        .map(|k| {
            let m = skeleton.angle_dofs();
            let mut centers = vec![0.0; m];
            let mut amplitudes = vec![0.0; m];
            let mut phases = vec![0.0; m];
            for d in 0..m {
                phases[d] = rng.random_range(0.0..2.0 * PI);
                if d < ROOT_DOFS {
                    amplitudes[d] = spec.root_sway * rng.random_range(0.5..1.0);
                    centers[d] = 0.5 * (lo[d] + hi[d]);
                } else {
                    let half = 0.5 * (hi[d] - lo[d]);
                    let mid = 0.5 * (hi[d] + lo[d]);
                    amplitudes[d] = spec.amplitude * half * rng.random_range(0.3..1.0);
                    centers[d] = mid + spec.center * half * rng.random_range(-1.0..1.0);
                }
            }
            Template {
                frequency: 0.5 + 0.5 * (k % 6) as f64,
                centers,
                amplitudes,
                phases,
            }
        })
        .collect()
}

fn check_feasible(skeleton: &Skeleton, spec: &SyntheticSpec) -> Result<()> {
    let mut errors = Vec::new();
    if spec.classes < 2 {
        errors.push(format!("classes: need at least 2, got {}", spec.classes));
    }
    if spec.per_class == 0 {
        errors.push("per_class: must be positive".into());
    }
    if spec.n_frames < 3 {
        errors.push(format!("n_frames: need at least 3, got {}", spec.n_frames));
    }
    for (name, v) in [
        ("amplitude", spec.amplitude),
        ("center", spec.center),
        ("amplitude_jitter", spec.amplitude_jitter),
        ("phase_jitter", spec.phase_jitter),
        ("noise", spec.noise),
        ("root_sway", spec.root_sway),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            errors.push(format!("{name}: must be finite and non-negative, got {v}"));
        }
    }
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    // Worst case excursion from the joint center, as a fraction of the half range.
    let reach = spec.center + spec.amplitude * (1.0 + spec.amplitude_jitter);
    let lo = skeleton.limits_min();
    let hi = skeleton.limits_max();
    for d in ROOT_DOFS..skeleton.angle_dofs() {
        let half = 0.5 * (hi[d] - lo[d]);
        if reach * half + 3.0 * spec.noise >= half {
            return Err(Error::Infeasible(format!(
                "dof {d}: trajectories reach {:.4} rad from center with half range {half:.4}",
                reach * half + 3.0 * spec.noise
            )));
        }
    }
    for d in 0..ROOT_DOFS {
        let half = 0.5 * (hi[d] - lo[d]);
        if spec.root_sway * (1.0 + spec.amplitude_jitter) + 3.0 * spec.noise >= half {
            return Err(Error::Infeasible(format!(
                "root dof {d}: sway exceeds half range {half}"
            )));
        }
    }
    Ok(())
}

fn sample_angles(
    skeleton: &Skeleton,
    spec: &SyntheticSpec,
    template: &Template,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let m = skeleton.angle_dofs();
    let n = spec.n_frames;
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let freq = template.frequency * rng.random_range(0.95..1.05);
    let mut out = Array2::zeros((n, m));
    for d in 0..m {
        let amp = template.amplitudes[d]
            * (1.0 + spec.amplitude_jitter * rng.random_range(-1.0..1.0));
        let phase = template.phases[d] + spec.phase_jitter * rng.random_range(-1.0..1.0);
        for t in 0..n {
            let clean = template.centers[d]
                + amp * (2.0 * PI * freq * t as f64 / n as f64 + phase).sin();
            let eps: f64 = if spec.noise > 0.0 {
                noise.sample(rng).clamp(-3.0 * spec.noise, 3.0 * spec.noise)
            } else {
                0.0
            };
            out[[t, d]] = clean + eps;
        }
    }
    out
}

/// Synthetic dataset with default generator settings and the given shape.
pub fn generate_synthetic_dataset(
    skeleton: &Skeleton,
    classes: usize,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let spec = SyntheticSpec {
        classes,
        per_class,
        ..SyntheticSpec::default()
    };
    generate_synthetic_dataset_with(skeleton, &spec, seed, Split::Train)
}

/// Generates `classes × per_class` position-space motions, ordered by class.
/// Deterministic given `spec` and `seed`; every motion is on-manifold.
pub fn generate_synthetic_dataset_with(
    skeleton: &Skeleton,
    spec: &SyntheticSpec,
    seed: u64,
    split: Split,
) -> Result<LabeledDataset> {
    check_feasible(skeleton, spec)?;
    let templates = templates(skeleton, spec);
    let stream = seed::derive_seed(seed, "samples");
    let mut samples = Vec::with_capacity(spec.classes * spec.per_class);
    for (k, template) in templates.iter().enumerate() {
        for i in 0..spec.per_class {
            let index = (k * spec.per_class + i) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::item_seed(stream, index));
            let angles = Motion::new(
                Representation::AngleSpace,
                sample_angles(skeleton, spec, template, &mut rng),
            )?;
            let verdict =
                kinematics::check_on_manifold(skeleton, &angles, &ManifoldTolerance::default())?;
            if !verdict.on_manifold {
                return Err(Error::Infeasible(format!(
                    "class {k} sample {i} leaves the joint limits"
                )));
            }
            samples.push(LabeledMotion {
                label: k,
                motion: kinematics::forward_kinematics(skeleton, &angles)?,
            });
        }
    }
    LabeledDataset::new(
        skeleton.clone(),
        spec.classes,
        spec.n_frames,
        split,
        seed,
        samples,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_determinism_and_manifold() {
        let s = Skeleton::humanoid();
        let a = generate_synthetic_dataset(&s, 4, 30, 11).unwrap();
        assert_eq!(a.len(), 120);
        assert_eq!(a.samples()[0].label, 0);
        assert_eq!(a.samples()[119].label, 3);
        let b = generate_synthetic_dataset(&s, 4, 30, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_dataset(&s, 4, 30, 12).unwrap();
        assert_ne!(a, c);
        for smp in a.samples() {
            let v = kinematics::check_on_manifold(&s, &smp.motion, &ManifoldTolerance::default())
                .unwrap();
            assert!(v.on_manifold, "{:?}", v.violations.first());
        }
    }

    #[test]
    fn rejects_amplitude_beyond_range() {
        let s = Skeleton::humanoid();
        let spec = SyntheticSpec {
            amplitude: 0.9,
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_synthetic_dataset_with(&s, &spec, 0, Split::Train),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let s = Skeleton::humanoid();
        let d = generate_synthetic_dataset(&s, 2, 1, 0).unwrap();
        let mut samples = d.samples().to_vec();
        samples[0].label = 2;
        assert!(matches!(
            LabeledDataset::new(s, 2, 24, Split::Test, 0, samples),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}
