mod common;

use mgmw::classifier::{
    generate_synthetic_dataset_with, train_classifier, ClassifierModel, Normalization, Split,
    SyntheticSpec, TrainConfig,
};
use mgmw::defense::{
    gaussian_smoothing_train, mmat_train, noisy_sample, perceptual_loss, perceptual_loss_gradient,
    sample_adversaries, smart_attack, smart_objective, temporal_filter, DefenseConfig, Sampler,
    SmartConfig, SmartMode, BINOMIAL_KERNEL,
};
use mgmw::kinematics::{bone_lengths, check_on_manifold};
use mgmw::metrics::{compute_metrics, MetricsOptions};
use mgmw::{Motion, Representation, Skeleton};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain_motion(s: &Skeleton, n: usize, seed: u64, spread: f64) -> Motion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * s.position_dofs()).map(|_| rng.random_range(-spread..spread)).collect();
    Motion::from_flat(Representation::PositionSpace, n, s.position_dofs(), data).unwrap()
}

fn toy_model(s: &Skeleton, n: usize, seed: u64) -> ClassifierModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = s.position_dofs();
    ClassifierModel::new_random(
        n,
        m,
        3,
        Representation::PositionSpace,
        &[8, 6],
        Normalization::identity(m),
        &mut rng,
    )
    .unwrap()
}

/// `l_dyn` and `l_bl` by direct loops over frames, DoFs and bones.
fn oracle_perceptual(s: &Skeleton, x: &Motion, xp: &Motion, cfg: &SmartConfig) -> f64 {
    let (a, b) = (x.frames(), xp.frames());
    let (n, m) = a.dim();
    let gamma = cfg.gamma.clone().unwrap_or(vec![1.0; m]);
    let d0 = |f: &ndarray::Array2<f64>, t: usize, d: usize| f[[t, d]];
    let d1 = |f: &ndarray::Array2<f64>, t: usize, d: usize| f[[t + 1, d]] - f[[t, d]];
    let d2 = |f: &ndarray::Array2<f64>, t: usize, d: usize| {
        let c = t.clamp(1, n - 2);
        f[[c + 1, d]] - 2.0 * f[[c, d]] + f[[c - 1, d]]
    };
    let mut dynamics = 0.0;
    for d in 0..m {
        let g2 = gamma[d] * gamma[d];
        for t in 0..n {
            dynamics += cfg.betas[0] * g2 * (d0(b, t, d) - d0(a, t, d)).powi(2);
            dynamics += cfg.betas[2] * g2 * (d2(b, t, d) - d2(a, t, d)).powi(2);
        }
        for t in 0..n - 1 {
            dynamics += cfg.betas[1] * g2 * (d1(b, t, d) - d1(a, t, d)).powi(2);
        }
    }
    let (bx, bxp) = (bone_lengths(s, x).unwrap(), bone_lengths(s, xp).unwrap());
    let bone = bx.iter().zip(bxp.iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / n as f64;
    cfg.alpha * dynamics + (1.0 - cfg.alpha) * bone
}

fn fd_relative_error(
    value: impl Fn(&Motion) -> f64,
    grad: &ndarray::Array2<f64>,
    xp: &Motion,
) -> f64 {
    let h = 1e-4;
    let (mut diff, mut scale) = (0.0, 0.0);
    for ((t, d), g) in grad.indexed_iter() {
        let bump = |s: f64| {
            let mut f = xp.frames().clone();
            f[[t, d]] += s;
            value(&xp.with_frames(f).unwrap())
        };
        let fd = (bump(h) - bump(-h)) / (2.0 * h);
        diff += (g - fd).powi(2);
        scale += fd * fd;
    }
    diff.sqrt() / scale.sqrt().max(1e-12)
}

#[test]
fn perceptual_loss_matches_direct_oracle() {
    let s = Skeleton::chain(&[1.0, 0.7, 0.5], 1.2).unwrap();
    let cfg = SmartConfig {
        gamma: Some((0..s.position_dofs()).map(|d| 0.5 + 0.1 * d as f64).collect()),
        ..SmartConfig::default()
    };
    for seed in 0..4 {
        let x = chain_motion(&s, 6, seed, 1.0);
        let xp = chain_motion(&s, 6, seed + 10, 1.0);
        let got = perceptual_loss(&x, &xp, &s, &cfg).unwrap();
        let want = oracle_perceptual(&s, &x, &xp, &cfg);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
        assert_eq!(perceptual_loss(&x, &x, &s, &cfg).unwrap(), 0.0);
    }
}

#[test]
fn perceptual_gradient_matches_finite_differences() {
    let s = Skeleton::chain(&[1.0, 0.7], 1.2).unwrap();
    let cfg = SmartConfig::default();
    for seed in 0..3 {
        let x = chain_motion(&s, 5, seed, 1.0);
        let xp = chain_motion(&s, 5, seed + 20, 1.0);
        let (_, g) = perceptual_loss_gradient(&x, &xp, &s, &cfg).unwrap();
        let err = fd_relative_error(|m| perceptual_loss(&x, m, &s, &cfg).unwrap(), &g, &xp);
        assert!(err <= 1e-4, "relative error {err:e}");
    }
}

#[test]
fn smart_composite_gradient_matches_finite_differences() {
    let s = Skeleton::chain(&[1.0, 0.7], 1.2).unwrap();
    let model = toy_model(&s, 4, 7);
    let cfg = SmartConfig::default();
    for seed in 0..3 {
        let x = chain_motion(&s, 4, seed, 1.0);
        let xp = chain_motion(&s, 4, seed + 30, 1.0);
        let p = model.predict_scores(&x).unwrap();
        for w in [0.0, 0.6, 1.0] {
            let (_, g) = smart_objective(&model, &x, &xp, &p, &s, &cfg, w).unwrap();
            let value = |m: &Motion| smart_objective(&model, &x, m, &p, &s, &cfg, w).unwrap().0;
            let err = fd_relative_error(value, &g, &xp);
            assert!(err <= 1e-4, "w {w}: relative error {err:e}");
        }
    }
}

#[test]
fn pure_classification_objective_ignores_alpha() {
    let s = Skeleton::chain(&[1.0, 0.7], 1.2).unwrap();
    let model = toy_model(&s, 4, 8);
    let x = chain_motion(&s, 4, 1, 1.0);
    let xp = chain_motion(&s, 4, 2, 1.0);
    let p = model.predict_scores(&x).unwrap();
    let a = SmartConfig { alpha: 0.0, ..SmartConfig::default() };
    let b = SmartConfig { alpha: 1.0, ..SmartConfig::default() };
    assert_eq!(
        smart_objective(&model, &x, &xp, &p, &s, &a, 1.0).unwrap(),
        smart_objective(&model, &x, &xp, &p, &s, &b, 1.0).unwrap()
    );
    assert_ne!(
        smart_objective(&model, &x, &xp, &p, &s, &a, 0.5).unwrap().0,
        smart_objective(&model, &x, &xp, &p, &s, &b, 0.5).unwrap().0
    );
}

#[test]
fn smart_losses_never_increase() {
    let f = common::fixture();
    for (i, sample) in f.test.samples().iter().step_by(11).take(4).enumerate() {
        for mode in [SmartMode::On, SmartMode::Off] {
            let cfg = SmartConfig { iterations: 20, ..SmartConfig::default() };
            let out = smart_attack(&f.model, &sample.motion, &f.skeleton, &cfg, mode).unwrap();
            assert!(out.losses.len() >= 2, "sample {i}: no step accepted");
            assert!(out.losses.windows(2).all(|w| w[1] <= w[0]), "{:?}", out.losses);
            assert_eq!(out.adversarial, f.model.predict(&out.motion).unwrap() != sample.label);
        }
    }
}

#[test]
fn sampled_sets_respect_their_manifold_side() {
    let f = common::fixture();
    let batch: Vec<_> = f.train.samples().iter().step_by(6).cloned().collect();
    for sampler in [Sampler::Basar, Sampler::Smart] {
        let cfg = DefenseConfig {
            sampler,
            basar_on_iterations: 1,
            basar_off_iterations: 20,
            smart: SmartConfig { iterations: 20, ..SmartConfig::default() },
            ..DefenseConfig::default()
        };
        let sets = sample_adversaries(&f.model, &batch, &f.train, &f.skeleton, &cfg, 3).unwrap();
        assert_eq!(sets.on.len(), batch.len());
        assert!(sets.stats.on_count + sets.stats.rejected + sets.stats.skipped <= batch.len());
        let mut on_pairs = Vec::new();
        let mut off_pairs = Vec::new();
        for (i, s) in batch.iter().enumerate() {
            if let Some(m) = &sets.on[i] {
                assert!(check_on_manifold(&f.skeleton, m, &cfg.tolerance).unwrap().on_manifold);
                on_pairs.push((s.motion.clone(), m.clone()));
            }
            if let Some(m) = &sets.off[i] {
                off_pairs.push((s.motion.clone(), m.clone()));
            }
        }
        assert!(!on_pairs.is_empty() && !off_pairs.is_empty(), "{sampler:?}: {:?}", sets.stats);
        let opts = MetricsOptions::default();
        let on = compute_metrics(&on_pairs, &f.skeleton, &opts).unwrap();
        let off = compute_metrics(&off_pairs, &f.skeleton, &opts).unwrap();
        assert!(off.bone_deviation > on.bone_deviation, "{sampler:?}: {off:?} vs {on:?}");
        let again = sample_adversaries(&f.model, &batch, &f.train, &f.skeleton, &cfg, 3).unwrap();
        assert_eq!(again.on, sets.on);
        assert_eq!(again.off, sets.off);
    }
}

#[test]
fn zero_mixing_weights_reduce_to_standard_training() {
    let s = Skeleton::humanoid();
    let spec = SyntheticSpec { per_class: 5, ..SyntheticSpec::default() };
    let train = generate_synthetic_dataset_with(&s, &spec, 4, Split::Train).unwrap();
    let tc = TrainConfig { epochs: 4, seed: 21, ..TrainConfig::default() };
    let cfg = DefenseConfig { train: tc.clone(), mu_on: 0.0, mu_off: 0.0, ..DefenseConfig::default() };
    let (defended, report) = mmat_train(&train, &cfg).unwrap();
    let (standard, _) = train_classifier(&train, &tc).unwrap();
    assert!(report.sampler.is_empty());
    assert_eq!(defended, standard);
}

#[test]
fn mixing_weight_validation_lists_every_problem() {
    let cfg = DefenseConfig { mu_on: 0.7, mu_off: 0.6, resample_every: 0, ..DefenseConfig::default() };
    let errors = cfg.validate();
    assert!(errors.iter().any(|e| e.contains("mu_on + defense.mu_off")));
    assert!(errors.iter().any(|e| e.contains("resample_every")));
    assert!((DefenseConfig::default().mu_c() - 0.6).abs() < 1e-15);
}

#[test]
fn filter_rejects_bad_kernels() {
    let s = Skeleton::chain(&[1.0], 1.0).unwrap();
    let m = chain_motion(&s, 5, 0, 1.0);
    assert!(temporal_filter(&m, &[0.5, 0.5]).is_err());
    assert!(temporal_filter(&m, &[0.5, 0.6, -0.1]).is_err());
    assert!(temporal_filter(&m, &[0.2, 0.2, 0.2]).is_err());
    assert_eq!(temporal_filter(&m, &[1.0]).unwrap(), m);
}

#[test]
fn smoothing_training_is_deterministic() {
    let s = Skeleton::humanoid();
    let spec = SyntheticSpec { per_class: 4, ..SyntheticSpec::default() };
    let train = generate_synthetic_dataset_with(&s, &spec, 5, Split::Train).unwrap();
    let tc = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let a = gaussian_smoothing_train(&train, 0.05, &BINOMIAL_KERNEL, &tc).unwrap();
    let b = gaussian_smoothing_train(&train, 0.05, &BINOMIAL_KERNEL, &tc).unwrap();
    assert_eq!(a.0, b.0);
    assert_ne!(a.0, train_classifier(&train, &tc).unwrap().0);
    assert!(gaussian_smoothing_train(&train, 0.0, &BINOMIAL_KERNEL, &tc).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filtering_preserves_constants_and_is_linear(seed in any::<u64>(), c in -5.0f64..5.0, k in -3.0f64..3.0) {
        let s = Skeleton::chain(&[1.0], 1.0).unwrap();
        let flat = Motion::from_flat(Representation::PositionSpace, 7, 6, vec![c; 42]).unwrap();
        let out = temporal_filter(&flat, &BINOMIAL_KERNEL).unwrap();
        prop_assert!(out.frames().iter().all(|v| (v - c).abs() <= 1e-12 * c.abs().max(1.0)));
        let x = chain_motion(&s, 7, seed, 1.0);
        let y = chain_motion(&s, 7, seed ^ 1, 1.0);
        let combo = x.with_frames(x.frames() * k + y.frames()).unwrap();
        let lhs = temporal_filter(&combo, &BINOMIAL_KERNEL).unwrap();
        let rhs = temporal_filter(&x, &BINOMIAL_KERNEL).unwrap().frames() * k
            + temporal_filter(&y, &BINOMIAL_KERNEL).unwrap().frames();
        prop_assert!(lhs.frames().iter().zip(rhs.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn bone_term_ignores_translation(seed in any::<u64>(), shift in prop::array::uniform3(-2.0f64..2.0)) {
        let s = Skeleton::chain(&[1.0, 0.5], 1.0).unwrap();
        let cfg = SmartConfig { alpha: 0.0, ..SmartConfig::default() };
        let x = chain_motion(&s, 5, seed, 1.0);
        let xp = chain_motion(&s, 5, seed ^ 7, 1.0);
        let mut f = xp.frames().clone();
        for ((_, d), v) in f.indexed_iter_mut() {
            *v += shift[d % 3];
        }
        let moved = xp.with_frames(f).unwrap();
        let a = perceptual_loss(&x, &xp, &s, &cfg).unwrap();
        let b = perceptual_loss(&x, &moved, &s, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn noise_level_shows_in_smoothed_samples(seed in any::<u64>()) {
        let s = Skeleton::chain(&[1.0], 1.0).unwrap();
        let x = chain_motion(&s, 12, seed, 1.0);
        let smooth = temporal_filter(&x, &BINOMIAL_KERNEL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = noisy_sample(&x, 0.01, &BINOMIAL_KERNEL, &mut rng).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let large = noisy_sample(&x, 0.1, &BINOMIAL_KERNEL, &mut rng).unwrap();
        let (ds, dl) = (smooth.distance(&small).unwrap(), smooth.distance(&large).unwrap());
        prop_assert!((dl - 10.0 * ds).abs() <= 1e-9 * dl);
    }
}
