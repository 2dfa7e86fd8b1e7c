use mgmw::classifier::generate_synthetic_dataset;
use mgmw::kinematics::{bone_lengths, inverse_kinematics, second_derivative};
use mgmw::manifold::{manifold_project, solve_barrier, ProjectionConfig, ProjectionProblem};
use mgmw::{Motion, Representation, Skeleton};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn single_frame(values: [f64; 2]) -> Motion {
    Motion::from_flat(Representation::AngleSpace, 1, 2, values.to_vec()).unwrap()
}

/// Dense grid over the box with step 1e-3, then two local refinements.
fn grid_argmin(problem: &ProjectionProblem, lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    let eval = |p: [f64; 2]| problem.objective(single_frame(p).frames(), 0.0);
    let mut best = [lo[0], lo[1]];
    let mut best_f = f64::INFINITY;
    let search = |c0: (f64, f64), c1: (f64, f64), step: f64, best: &mut [f64; 2], best_f: &mut f64| {
        let n0 = ((c0.1 - c0.0) / step).ceil() as usize;
        let n1 = ((c1.1 - c1.0) / step).ceil() as usize;
        for i in 0..=n0 {
            for j in 0..=n1 {
                let p = [(c0.0 + i as f64 * step).min(c0.1), (c1.0 + j as f64 * step).min(c1.1)];
                let f = eval(p);
                if f < *best_f {
                    *best_f = f;
                    *best = p;
                }
            }
        }
    };
    search((lo[0], hi[0]), (lo[1], hi[1]), 1e-3, &mut best, &mut best_f);
    for step in [1e-5, 1e-7] {
        let around = |k: usize, b: [f64; 2]| ((b[k] - 100.0 * step).max(lo[k]), (b[k] + 100.0 * step).min(hi[k]));
        let (c0, c1) = (around(0, best), around(1, best));
        search(c0, c1, step, &mut best, &mut best_f);
    }
    best
}

fn perturbed(skeleton: &Skeleton, x: &Motion, scale: f64, seed: u64) -> Motion {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = x.frames().mapv(|v| v + scale * rng.random_range(-1.0..1.0));
    let _ = skeleton;
    x.with_frames(f).unwrap()
}

fn acceleration_gap(a: &Motion, b: &Motion) -> f64 {
    let d = second_derivative(a).unwrap() - second_derivative(b).unwrap();
    d.mapv(|v| v * v).sum().sqrt()
}

#[test]
fn two_dof_single_frame_matches_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..6 {
        let lo = [rng.random_range(-1.5..-0.2), rng.random_range(-1.0..-0.1)];
        let hi = [rng.random_range(0.1..1.2), rng.random_range(0.3..1.4)];
        let reference = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let problem =
            ProjectionProblem::new(single_frame(reference), None, lo.to_vec(), hi.to_vec()).unwrap();
        let (solution, report) = solve_barrier(&problem, &ProjectionConfig::default()).unwrap();
        assert!(report.converged);
        let oracle = grid_argmin(&problem, lo, hi);
        for k in 0..2 {
            let got = solution.frames()[[0, k]];
            assert!(lo[k] < got && got < hi[k]);
            assert!((got - oracle[k]).abs() <= 1e-4, "dof {k}: {got} vs {oracle:?}");
        }
    }
}

#[test]
fn pushed_dof_lands_on_the_clamp() {
    let problem = ProjectionProblem::new(single_frame([1.2, 0.1]), None, vec![-1.0; 2], vec![1.0; 2])
        .unwrap();
    let (solution, _) = solve_barrier(&problem, &ProjectionConfig::default()).unwrap();
    let f = solution.frames();
    assert!(f[[0, 0]] < 1.0 && (f[[0, 0]] - 1.0).abs() <= 1e-4);
    assert!((f[[0, 1]] - 0.1).abs() <= 1e-6);
}

#[test]
fn barrier_free_objective_does_not_increase_along_schedule() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 6;
    let data: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-1.6..1.6)).collect();
    let reference = Motion::from_flat(Representation::AngleSpace, n, 3, data).unwrap();
    let accel = second_derivative(&reference).unwrap().mapv(|v| 0.5 * v);
    let problem = ProjectionProblem::new(reference, Some(accel), vec![-1.0; 3], vec![1.0; 3]).unwrap();
    let (solution, report) = solve_barrier(&problem, &ProjectionConfig::default()).unwrap();
    assert!(solution.frames().iter().all(|v| v.abs() < 1.0));
    for pair in report.outer.windows(2) {
        assert!(pair[1].objective <= pair[0].objective + 1e-9, "{pair:?}");
    }
}

#[test]
fn projected_motions_restore_bones_and_limits() {
    let s = Skeleton::humanoid();
    let data = generate_synthetic_dataset(&s, 4, 3, 5).unwrap();
    let angle_cfg = ProjectionConfig { output: Some(Representation::AngleSpace), ..ProjectionConfig::default() };
    for (i, sample) in data.samples().iter().enumerate() {
        let x = &sample.motion;
        let x_tilde = perturbed(&s, x, 0.08, i as u64);
        let (projected, _) = manifold_project(&s, &x_tilde, x, &ProjectionConfig::default()).unwrap();
        assert_eq!(projected.representation(), Representation::PositionSpace);
        for ((_, bone), &len) in bone_lengths(&s, &projected).unwrap().indexed_iter() {
            let reference = s.reference_length(bone);
            assert!((len - reference).abs() <= 1e-6 * reference);
        }
        let (angles, _) = manifold_project(&s, &x_tilde, x, &angle_cfg).unwrap();
        for ((_, d), &v) in angles.frames().indexed_iter() {
            assert!(s.limits_min()[d] < v && v < s.limits_max()[d], "dof {d}: {v}");
        }
    }
}

#[test]
fn on_manifold_input_with_matching_dynamics_is_a_fixed_point() {
    let s = Skeleton::humanoid();
    let data = generate_synthetic_dataset(&s, 2, 2, 6).unwrap();
    for sample in data.samples() {
        let x = &sample.motion;
        for weight in [0.0, 0.5, 10.0] {
            let cfg = ProjectionConfig { weight, ..ProjectionConfig::default() };
            let (projected, _) = manifold_project(&s, x, x, &cfg).unwrap();
            let gap = projected
                .frames()
                .iter()
                .zip(x.frames().iter())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(gap <= 1e-6, "weight {weight}: moved by {gap:e}");
        }
    }
}

#[test]
fn projection_without_dynamics_is_idempotent() {
    let s = Skeleton::humanoid();
    let data = generate_synthetic_dataset(&s, 2, 1, 7).unwrap();
    let x = &data.samples()[0].motion;
    let cfg = ProjectionConfig { weight: 0.0, ..ProjectionConfig::default() };
    let x_tilde = perturbed(&s, x, 0.2, 1);
    let (once, _) = manifold_project(&s, &x_tilde, x, &cfg).unwrap();
    let (twice, _) = manifold_project(&s, &once, x, &cfg).unwrap();
    let moved = once
        .frames()
        .iter()
        .zip(twice.frames().iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    // Active bounds are only met to about sqrt(barrier_floor).
    assert!(moved <= 1e-4, "moved by {moved:e}");
}

#[test]
fn heavier_dynamics_weight_tracks_original_accelerations() {
    let s = Skeleton::humanoid();
    let data = generate_synthetic_dataset(&s, 2, 2, 9).unwrap();
    let angle_cfg = |weight| ProjectionConfig {
        weight,
        output: Some(Representation::AngleSpace),
        ..ProjectionConfig::default()
    };
    for (i, sample) in data.samples().iter().enumerate() {
        let x = &sample.motion;
        let (theta_x, _) = inverse_kinematics(&s, x, None).unwrap();
        let jerky = perturbed(&s, x, 0.05, 100 + i as u64);
        let (loose, _) = manifold_project(&s, &jerky, x, &angle_cfg(0.0)).unwrap();
        let (tight, _) = manifold_project(&s, &jerky, x, &angle_cfg(50.0)).unwrap();
        assert!(acceleration_gap(&tight, &theta_x) < acceleration_gap(&loose, &theta_x));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solutions_stay_strictly_inside_the_box(
        seed in any::<u64>(),
        n in 3usize..8,
        weight in 0.0f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let reference = Motion::from_flat(Representation::AngleSpace, n, 2, data).unwrap();
        let accel = second_derivative(&reference).unwrap();
        let problem = ProjectionProblem::new(reference, Some(accel), vec![-1.0, -0.5], vec![1.0, 0.5]).unwrap();
        let cfg = ProjectionConfig { weight, ..ProjectionConfig::default() };
        let (solution, _) = solve_barrier(&problem, &cfg).unwrap();
        for ((_, d), &v) in solution.frames().indexed_iter() {
            prop_assert!(v > problem.limits_min[d] && v < problem.limits_max[d]);
        }
    }

    #[test]
    fn symmetric_problem_stays_centered(half in 0.1f64..3.0, n in 1usize..5) {
        let reference = Motion::from_flat(Representation::AngleSpace, n, 2, vec![0.0; 2 * n]).unwrap();
        let problem = ProjectionProblem::new(reference, None, vec![-half; 2], vec![half; 2]).unwrap();
        let (solution, _) = solve_barrier(&problem, &ProjectionConfig::default()).unwrap();
        prop_assert!(solution.frames().iter().all(|v| v.abs() <= 1e-9));
    }
}
