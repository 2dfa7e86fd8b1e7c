//! Forward and inverse kinematics, temporal finite differences, bone
//! lengths and the on-manifold test.
//!
//! See [`crate::skeleton`] for the angle parameterization and DoF layouts.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};
use crate::linalg;
use crate::motion::{Motion, Representation};
use crate::skeleton::{Skeleton, ROOT_DOFS};

fn expect(
    skeleton: &Skeleton,
    motion: &Motion,
    representation: Representation,
) -> Result<()> {
    let dofs = match representation {
        Representation::AngleSpace => skeleton.angle_dofs(),
        Representation::PositionSpace => skeleton.position_dofs(),
    };
    if motion.representation() != representation || motion.dofs() != dofs {
        return Err(Error::DimensionMismatch(format!(
            "expected {representation:?} with {dofs} dofs, got {:?} with {}",
            motion.representation(),
            motion.dofs()
        )));
    }
    Ok(())
}

/// Per-joint global rotations and positions of one posed frame.
struct Pose {
    globals: Vec<Mat3>,
    positions: Vec<Vec3>,
}

fn swing(a: f64, b: f64) -> Mat3 {
    geom::mat_mul(&geom::rot_z(a), &geom::rot_x(b))
}

fn pose_frame(skeleton: &Skeleton, angles: &[f64]) -> Pose {
    let j = skeleton.joint_count();
    let mut globals = vec![geom::IDENTITY; j];
    let mut positions = vec![[0.0; 3]; j];
    let root = skeleton.root();
    positions[root] = geom::add(
        skeleton.root_rest_position(),
        [angles[0], angles[1], angles[2]],
    );
    for &joint in &skeleton.topological_order()[1..] {
        let parent = skeleton.parent(joint).expect("non-root joints have parents");
        let dofs = skeleton.dof_range(joint);
        let q = skeleton.rest_frame(joint);
        let local = geom::mat_mul(
            &geom::mat_mul(q, &swing(angles[dofs.start], angles[dofs.start + 1])),
            &geom::transpose(q),
        );
        globals[joint] = geom::mat_mul(&globals[parent], &local);
        let bone = skeleton.bone_of_joint(joint).expect("non-root joints own a bone");
        let offset = geom::scale(skeleton.direction(joint), skeleton.reference_length(bone));
        positions[joint] = geom::add(positions[parent], geom::mat_vec(&globals[joint], offset));
    }
    Pose { globals, positions }
}

/// Joint positions of every frame of an angle-space motion. Bone lengths of
/// the result equal the skeleton's reference lengths by construction.
pub fn forward_kinematics(skeleton: &Skeleton, angles: &Motion) -> Result<Motion> {
    expect(skeleton, angles, Representation::AngleSpace)?;
    let n = angles.n_frames();
    let mut out = Array2::zeros((n, skeleton.position_dofs()));
    for t in 0..n {
        let frame = angles.frame(t).to_vec();
        let pose = pose_frame(skeleton, &frame);
        for (k, p) in pose.positions.iter().enumerate() {
            out[[t, 3 * k]] = p[0];
            out[[t, 3 * k + 1]] = p[1];
            out[[t, 3 * k + 2]] = p[2];
        }
    }
    Motion::with_frame_rate(Representation::PositionSpace, out, angles.frame_rate())
}

/// Settings for [`inverse_kinematics_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkOptions {
    /// Levenberg–Marquardt refinement steps per frame.
    pub max_iterations: usize,
    /// Initial damping of the normal equations.
    pub damping: f64,
    /// Refinement stops once every joint residual is below this.
    pub tolerance: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            damping: 1e-3,
            tolerance: 1e-12,
        }
    }
}

/// Per-frame residuals of an IK solve.
#[derive(Debug, Clone, PartialEq)]
pub struct IkReport {
    /// `n × joints` distance between the observed joint and the posed one.
    pub residuals: Array2<f64>,
    /// `(frame, joint)` pairs whose observed bone had zero length; those
    /// swing angles were copied from the reference.
    pub degenerate: Vec<(usize, usize)>,
}

impl IkReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, &v| m.max(v))
    }

    pub fn frame_max(&self, frame: usize) -> f64 {
        self.residuals.row(frame).iter().fold(0.0, |m, &v| m.max(v))
    }
}

fn wrap_near(angle: f64, reference: f64) -> f64 {
    angle + (2.0 * PI) * ((reference - angle) / (2.0 * PI)).round()
}

/// Closed-form top-down solve: each bone's swing is chosen so the posed bone
/// points along the observed one, on the branch nearest `reference`.
fn analytic_frame(
    skeleton: &Skeleton,
    observed: &[Vec3],
    reference: &[f64],
    frame: usize,
    degenerate: &mut Vec<(usize, usize)>,
) -> Vec<f64> {
    let mut angles = reference.to_vec();
    let root = skeleton.root();
    let rest = skeleton.root_rest_position();
    for k in 0..ROOT_DOFS {
        angles[k] = observed[root][k] - rest[k];
    }
    let mut globals = vec![geom::IDENTITY; skeleton.joint_count()];
    for &joint in &skeleton.topological_order()[1..] {
        let parent = skeleton.parent(joint).expect("non-root joints have parents");
        let dofs = skeleton.dof_range(joint);
        let q = skeleton.rest_frame(joint);
        let (ra, rb) = (reference[dofs.start], reference[dofs.start + 1]);
        let d = geom::sub(observed[joint], observed[parent]);
        let len = geom::norm(d);
        let (a, b) = if len < 1e-12 {
            degenerate.push((frame, joint));
            (ra, rb)
        } else {
            let local = geom::mat_t_vec(q, geom::mat_t_vec(&globals[parent], geom::scale(d, 1.0 / len)));
            let b0 = local[2].clamp(-1.0, 1.0).asin();
            let a0 = if local[0].hypot(local[1]) < 1e-12 {
                ra
            } else {
                (-local[0]).atan2(local[1])
            };
            [(a0, b0), (a0 + PI, PI - b0)]
                .into_iter()
                .map(|(a, b)| (wrap_near(a, ra), wrap_near(b, rb)))
                .min_by(|x, y| {
                    let dx = (x.0 - ra).powi(2) + (x.1 - rb).powi(2);
                    let dy = (y.0 - ra).powi(2) + (y.1 - rb).powi(2);
                    dx.total_cmp(&dy)
                })
                .expect("two candidates")
        };
        angles[dofs.start] = a;
        angles[dofs.start + 1] = b;
        let local = geom::mat_mul(&geom::mat_mul(q, &swing(a, b)), &geom::transpose(q));
        globals[joint] = geom::mat_mul(&globals[parent], &local);
    }
    angles
}

fn residual(pose: &Pose, observed: &[Vec3]) -> Vec<f64> {
    pose.positions
        .iter()
        .zip(observed)
        .flat_map(|(p, o)| geom::sub(*p, *o))
        .collect()
}

/// Column-major `3J × m` Jacobian of joint positions w.r.t. frame angles.
fn jacobian(skeleton: &Skeleton, angles: &[f64], pose: &Pose) -> Vec<Vec<f64>> {
    let j = skeleton.joint_count();
    let m = skeleton.angle_dofs();
    let mut cols = vec![vec![0.0; 3 * j]; m];
    for (d, col) in cols.iter_mut().enumerate().take(ROOT_DOFS) {
        for k in 0..j {
            col[3 * k + d] = 1.0;
        }
    }
    for &joint in &skeleton.topological_order()[1..] {
        let parent = skeleton.parent(joint).expect("non-root joints have parents");
        let dofs = skeleton.dof_range(joint);
        let q = skeleton.rest_frame(joint);
        let frame = geom::mat_mul(&pose.globals[parent], q);
        let axis_a = geom::mat_vec(&frame, [0.0, 0.0, 1.0]);
        let axis_b = geom::mat_vec(
            &geom::mat_mul(&frame, &geom::rot_z(angles[dofs.start])),
            [1.0, 0.0, 0.0],
        );
        let pivot = pose.positions[parent];
        for k in 0..j {
            if !skeleton.in_subtree(joint, k) {
                continue;
            }
            let arm = geom::sub(pose.positions[k], pivot);
            let da = geom::cross(axis_a, arm);
            let db = geom::cross(axis_b, arm);
            for c in 0..3 {
                cols[dofs.start][3 * k + c] = da[c];
                cols[dofs.start + 1][3 * k + c] = db[c];
            }
        }
    }
    cols
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn refine_frame(
    skeleton: &Skeleton,
    observed: &[Vec3],
    mut angles: Vec<f64>,
    opts: &IkOptions,
) -> Vec<f64> {
    let m = angles.len();
    let mut pose = pose_frame(skeleton, &angles);
    let mut r = residual(&pose, observed);
    let mut cost = sq_norm(&r);
    let mut mu = opts.damping;
    for _ in 0..opts.max_iterations {
        if r.iter().all(|v| v.abs() <= opts.tolerance) {
            break;
        }
        let cols = jacobian(skeleton, &angles, &pose);
        let mut h = vec![0.0; m * m];
        let mut g = vec![0.0; m];
        for a in 0..m {
            g[a] = -cols[a].iter().zip(&r).map(|(x, y)| x * y).sum::<f64>();
            for b in 0..=a {
                let v: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                h[a * m + b] = v;
                h[b * m + a] = v;
            }
        }
        let mut improved = false;
        for _ in 0..8 {
            let mut hd = h.clone();
            for a in 0..m {
                hd[a * m + a] += mu * (1.0 + h[a * m + a]);
            }
            let mut step = g.clone();
            if !linalg::cholesky_solve(&mut hd, m, &mut step) {
                mu *= 10.0;
                continue;
            }
            let trial: Vec<f64> = angles.iter().zip(&step).map(|(a, s)| a + s).collect();
            let trial_pose = pose_frame(skeleton, &trial);
            let trial_r = residual(&trial_pose, observed);
            let trial_cost = sq_norm(&trial_r);
            if trial_cost < cost {
                angles = trial;
                pose = trial_pose;
                r = trial_r;
                cost = trial_cost;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    angles
}

/// Inverse kinematics with default options. See [`inverse_kinematics_with`].
pub fn inverse_kinematics(
    skeleton: &Skeleton,
    positions: &Motion,
    reference: Option<&Motion>,
) -> Result<(Motion, IkReport)> {
    inverse_kinematics_with(skeleton, positions, reference, &IkOptions::default())
}

/// Angles whose forward kinematics best match `positions`, frame by frame.
///
/// Each frame starts from the closed-form bone-direction solution on the
/// branch nearest its reference angles (frame `t` of `reference` when given,
/// otherwise the previous frame's solution, and the rest pose for frame 0),
/// then runs damped least squares on the joint position error. On-manifold
/// inputs are reproduced to round-off; inputs with stretched or collapsed
/// bones get a best-effort fit whose per-joint residuals are reported.
pub fn inverse_kinematics_with(
    skeleton: &Skeleton,
    positions: &Motion,
    reference: Option<&Motion>,
    opts: &IkOptions,
) -> Result<(Motion, IkReport)> {
    expect(skeleton, positions, Representation::PositionSpace)?;
    if let Some(r) = reference {
        expect(skeleton, r, Representation::AngleSpace)?;
        if r.n_frames() != positions.n_frames() {
            return Err(Error::DimensionMismatch(format!(
                "reference has {} frames, positions {}",
                r.n_frames(),
                positions.n_frames()
            )));
        }
    }
    let n = positions.n_frames();
    let j = skeleton.joint_count();
    let m = skeleton.angle_dofs();
    let mut out = Array2::zeros((n, m));
    let mut residuals = Array2::zeros((n, j));
    let mut degenerate = Vec::new();
    let mut previous = vec![0.0; m];
    for t in 0..n {
        let row = positions.frame(t);
        let observed: Vec<Vec3> = (0..j)
            .map(|k| [row[3 * k], row[3 * k + 1], row[3 * k + 2]])
            .collect();
        let refs = match reference {
            Some(r) => r.frame(t).to_vec(),
            None => previous.clone(),
        };
        let start = analytic_frame(skeleton, &observed, &refs, t, &mut degenerate);
        let angles = refine_frame(skeleton, &observed, start, opts);
        let pose = pose_frame(skeleton, &angles);
        for k in 0..j {
            residuals[[t, k]] = geom::norm(geom::sub(pose.positions[k], observed[k]));
        }
        for d in 0..m {
            out[[t, d]] = angles[d];
        }
        previous = angles;
    }
    let motion = Motion::with_frame_rate(Representation::AngleSpace, out, positions.frame_rate())?;
    Ok((
        motion,
        IkReport {
            residuals,
            degenerate,
        },
    ))
}

/// Central second difference `x[t+1] − 2x[t] + x[t−1]` scaled by the
/// squared frame rate. The first and last frames copy their neighbour's
/// value so the output keeps `n` frames.
pub fn second_derivative(motion: &Motion) -> Result<Array2<f64>> {
    if motion.n_frames() < 3 {
        return Err(Error::TooFewFrames {
            frames: motion.n_frames(),
            required: 3,
        });
    }
    let scale = motion.frame_rate() * motion.frame_rate();
    Ok(second_difference(motion.frames()).mapv(|v| v * scale))
}

fn stencil_center(t: usize, n: usize) -> usize {
    t.clamp(1, n - 2)
}

/// Unscaled second difference with endpoint copies; requires `n ≥ 3`.
pub(crate) fn second_difference(x: &Array2<f64>) -> Array2<f64> {
    let (n, m) = x.dim();
    debug_assert!(n >= 3);
    let mut out = Array2::zeros((n, m));
    for t in 0..n {
        let c = stencil_center(t, n);
        for d in 0..m {
            out[[t, d]] = x[[c + 1, d]] - 2.0 * x[[c, d]] + x[[c - 1, d]];
        }
    }
    out
}

/// Transpose of [`second_difference`] applied to `g`.
pub(crate) fn second_difference_adjoint(g: &Array2<f64>) -> Array2<f64> {
    let (n, m) = g.dim();
    let mut out = Array2::zeros((n, m));
    for t in 0..n {
        let c = stencil_center(t, n);
        for d in 0..m {
            let v = g[[t, d]];
            out[[c - 1, d]] += v;
            out[[c, d]] -= 2.0 * v;
            out[[c + 1, d]] += v;
        }
    }
    out
}

/// Forward difference `x[t+1] − x[t]`, `n − 1` rows.
pub(crate) fn first_difference(x: &Array2<f64>) -> Array2<f64> {
    let (n, m) = x.dim();
    let mut out = Array2::zeros((n.saturating_sub(1), m));
    for t in 0..n.saturating_sub(1) {
        for d in 0..m {
            out[[t, d]] = x[[t + 1, d]] - x[[t, d]];
        }
    }
    out
}

/// Transpose of [`first_difference`].
pub(crate) fn first_difference_adjoint(g: &Array2<f64>, n: usize) -> Array2<f64> {
    let m = g.ncols();
    let mut out = Array2::zeros((n, m));
    for t in 0..g.nrows() {
        for d in 0..m {
            out[[t + 1, d]] += g[[t, d]];
            out[[t, d]] -= g[[t, d]];
        }
    }
    out
}

/// Per-frame Euclidean length of every bone, `n × bones`.
pub fn bone_lengths(skeleton: &Skeleton, positions: &Motion) -> Result<Array2<f64>> {
    expect(skeleton, positions, Representation::PositionSpace)?;
    let n = positions.n_frames();
    let f = positions.frames();
    let mut out = Array2::zeros((n, skeleton.bone_count()));
    for t in 0..n {
        for (b, &joint) in skeleton.bone_joints().iter().enumerate() {
            let p = skeleton.parent(joint).expect("bones have parents");
            let d: f64 = (0..3)
                .map(|c| (f[[t, 3 * joint + c]] - f[[t, 3 * p + c]]).powi(2))
                .sum();
            out[[t, b]] = d.sqrt();
        }
    }
    Ok(out)
}

/// Tolerances of the on-manifold test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManifoldTolerance {
    /// Allowed relative bone-length deviation.
    pub bone: f64,
    /// Allowed excursion past a joint limit, in radians.
    pub angle: f64,
}

impl Default for ManifoldTolerance {
    fn default() -> Self {
        Self {
            bone: 1e-3,
            angle: 1e-6,
        }
    }
}

/// A single constraint violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    BoneLength {
        frame: usize,
        bone: usize,
        joint: usize,
        relative_deviation: f64,
    },
    JointLimit {
        frame: usize,
        dof: usize,
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnManifoldVerdict {
    pub on_manifold: bool,
    pub violations: Vec<Violation>,
}

/// Whether every pose keeps the reference bone lengths and joint limits.
/// Position-space motions are first mapped to angles by IK.
pub fn check_on_manifold(
    skeleton: &Skeleton,
    motion: &Motion,
    tol: &ManifoldTolerance,
) -> Result<OnManifoldVerdict> {
    let mut violations = Vec::new();
    let angles = match motion.representation() {
        Representation::AngleSpace => {
            expect(skeleton, motion, Representation::AngleSpace)?;
            motion.clone()
        }
        Representation::PositionSpace => {
            let lengths = bone_lengths(skeleton, motion)?;
            for ((frame, bone), &len) in lengths.indexed_iter() {
                let reference = skeleton.reference_length(bone);
                let rel = (len - reference).abs() / reference;
                if rel > tol.bone {
                    violations.push(Violation::BoneLength {
                        frame,
                        bone,
                        joint: skeleton.bone_joints()[bone],
                        relative_deviation: rel,
                    });
                }
            }
            inverse_kinematics(skeleton, motion, None)?.0
        }
    };
    let (lo, hi) = (skeleton.limits_min(), skeleton.limits_max());
    for ((frame, dof), &value) in angles.frames().indexed_iter() {
        if value < lo[dof] - tol.angle || value > hi[dof] + tol.angle {
            violations.push(Violation::JointLimit { frame, dof, value });
        }
    }
    Ok(OnManifoldVerdict {
        on_manifold: violations.is_empty(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn chain() -> Skeleton {
        Skeleton::chain(&[1.0, 1.0], 3.0).unwrap()
    }

    fn angles(rows: Vec<Vec<f64>>) -> Motion {
        let n = rows.len();
        let m = rows[0].len();
        Motion::from_flat(
            Representation::AngleSpace,
            n,
            m,
            rows.into_iter().flatten().collect(),
        )
        .unwrap()
    }

    #[test]
    fn rest_pose_is_colinear_at_offsets() {
        let pos = forward_kinematics(&chain(), &angles(vec![vec![0.0; 7]])).unwrap();
        let f = pos.frames();
        let expected = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn planar_chain_matches_trigonometry() {
        // Swing `a` of a bone resting along +x is a planar rotation about z.
        for (t1, t2) in [(PI / 2.0, 0.0), (0.3, -1.1), (-2.0, 0.7)] {
            let pos =
                forward_kinematics(&chain(), &angles(vec![vec![0.0, 0.0, 0.0, t1, 0.0, t2, 0.0]]))
                    .unwrap();
            let f = pos.frames();
            let elbow = [t1.cos(), t1.sin()];
            let tip = [t1.cos() + (t1 + t2).cos(), t1.sin() + (t1 + t2).sin()];
            assert!((f[[0, 3]] - elbow[0]).abs() < 1e-12);
            assert!((f[[0, 4]] - elbow[1]).abs() < 1e-12);
            assert!((f[[0, 6]] - tip[0]).abs() < 1e-12);
            assert!((f[[0, 7]] - tip[1]).abs() < 1e-12);
            assert!(f[[0, 8]].abs() < 1e-12);
        }
    }

    #[test]
    fn fk_rejects_wrong_shape() {
        let err = forward_kinematics(&chain(), &angles(vec![vec![0.0; 6]])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn ik_of_rest_pose_is_zero() {
        let s = Skeleton::humanoid();
        let rest = Motion::new(
            Representation::AngleSpace,
            Array2::zeros((2, s.angle_dofs())),
        )
        .unwrap();
        let pos = forward_kinematics(&s, &rest).unwrap();
        let (back, report) = inverse_kinematics(&s, &pos, None).unwrap();
        assert!(back.frames().iter().all(|v| v.abs() < 1e-12));
        assert!(report.max_residual() < 1e-12);
    }

    #[test]
    fn ik_recovers_in_limit_angles() {
        let s = Skeleton::humanoid();
        let m = s.angle_dofs();
        let mut rows = Vec::new();
        for t in 0..4 {
            rows.push(
                (0..m)
                    .map(|d| {
                        let span = 0.8 * s.limits_max()[d].min(-s.limits_min()[d]);
                        span * ((d * 7 + t * 3) as f64 * 0.37).sin()
                    })
                    .collect(),
            );
        }
        let theta = angles(rows);
        let pos = forward_kinematics(&s, &theta).unwrap();
        let (back, report) = inverse_kinematics(&s, &pos, None).unwrap();
        for (a, b) in back.frames().iter().zip(theta.frames().iter()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(report.max_residual() < 1e-9);
        assert!(report.degenerate.is_empty());
    }

    #[test]
    fn ik_uses_reference_branch() {
        let s = chain();
        // (a, b) and (a + π, π − b) pose the same bone direction.
        let theta = angles(vec![vec![0.0, 0.0, 0.0, 0.4, 0.2, 0.0, 0.0]]);
        let alt = angles(vec![vec![0.0, 0.0, 0.0, 0.4 + PI, PI - 0.2, 0.0, 0.0]]);
        let pos = forward_kinematics(&s, &theta).unwrap();
        let pos_alt = forward_kinematics(&s, &alt).unwrap();
        let (back, _) = inverse_kinematics(&s, &pos, Some(&alt)).unwrap();
        let refit = forward_kinematics(&s, &back).unwrap();
        assert!((back.frames()[[0, 3]] - (0.4 + PI)).abs() < 1e-9);
        assert!((back.frames()[[0, 4]] - (PI - 0.2)).abs() < 1e-9);
        // The second bone's swing compensates, so positions still match.
        for (a, b) in refit.frames().iter().zip(pos_alt.frames().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn stretched_bone_shows_in_residuals() {
        let s = Skeleton::humanoid();
        let theta = Motion::new(
            Representation::AngleSpace,
            Array2::from_elem((3, s.angle_dofs()), 0.1),
        )
        .unwrap();
        let mut pos = forward_kinematics(&s, &theta).unwrap().into_frames();
        // Stretch the left forearm (joint 4, parent 3) by 10% in frame 1.
        for c in 0..3 {
            let d = pos[[1, 12 + c]] - pos[[1, 9 + c]];
            pos[[1, 12 + c]] = pos[[1, 9 + c]] + 1.1 * d;
        }
        let stretched = Motion::new(Representation::PositionSpace, pos).unwrap();
        let (_, report) = inverse_kinematics(&s, &stretched, None).unwrap();
        assert!(report.frame_max(0) < 1e-9);
        assert!(report.frame_max(2) < 1e-9);
        assert!(report.residuals[[1, 4]] > 1e-3);
    }

    #[test]
    fn collapsed_bone_is_flagged_not_fatal() {
        let s = chain();
        let pos = Motion::new(
            Representation::PositionSpace,
            array![[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]],
        )
        .unwrap();
        let (_, report) = inverse_kinematics(&s, &pos, None).unwrap();
        assert_eq!(report.degenerate, vec![(0, 1)]);
        assert!(report.max_residual() > 0.1);
    }

    #[test]
    fn second_derivative_cases() {
        let constant = Motion::new(Representation::AngleSpace, Array2::from_elem((5, 2), 3.0)).unwrap();
        assert!(second_derivative(&constant).unwrap().iter().all(|&v| v == 0.0));

        let quad = Motion::from_flat(
            Representation::AngleSpace,
            6,
            1,
            (0..6).map(|t| (t * t) as f64).collect(),
        )
        .unwrap();
        let a = second_derivative(&quad).unwrap();
        assert!(a.iter().all(|&v| v == 2.0));

        let short = Motion::new(Representation::AngleSpace, Array2::zeros((2, 1))).unwrap();
        assert!(matches!(
            second_derivative(&short),
            Err(Error::TooFewFrames { frames: 2, .. })
        ));
    }

    #[test]
    fn second_derivative_matches_direct_recomputation() {
        let x = array![[0.3, -1.0], [1.7, 0.2], [-0.4, 0.9], [2.2, 2.5], [0.1, -0.6]];
        let m = Motion::new(Representation::PositionSpace, x.clone()).unwrap();
        let a = second_derivative(&m).unwrap();
        for d in 0..2 {
            let inner: Vec<f64> = (1..4)
                .map(|t| x[[t + 1, d]] - 2.0 * x[[t, d]] + x[[t - 1, d]])
                .collect();
            assert_eq!(a[[0, d]], inner[0]);
            assert_eq!(a[[1, d]], inner[0]);
            assert_eq!(a[[2, d]], inner[1]);
            assert_eq!(a[[3, d]], inner[2]);
            assert_eq!(a[[4, d]], inner[2]);
        }
    }

    #[test]
    fn difference_adjoints_are_transposes() {
        let x = Array2::from_shape_fn((6, 2), |(t, d)| ((t * 5 + d) as f64 * 0.7).sin());
        let g = Array2::from_shape_fn((6, 2), |(t, d)| ((t * 3 + d * 11) as f64 * 0.3).cos());
        let lhs: f64 = (&second_difference(&x) * &g).sum();
        let rhs: f64 = (&x * &second_difference_adjoint(&g)).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let g1 = Array2::from_shape_fn((5, 2), |(t, d)| (t as f64 - d as f64) * 0.4);
        let lhs: f64 = (&first_difference(&x) * &g1).sum();
        let rhs: f64 = (&x * &first_difference_adjoint(&g1, 6)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn bone_length_cases() {
        let s = Skeleton::chain(&[3.0], 1.0).unwrap();
        let pos = Motion::new(
            Representation::PositionSpace,
            array![[0.0, 0.0, 0.0, 0.0, 3.0, 0.0]],
        )
        .unwrap();
        assert_eq!(bone_lengths(&s, &pos).unwrap(), array![[3.0]]);
        let doubled = pos.with_frames(pos.frames() * 2.0).unwrap();
        assert_eq!(bone_lengths(&s, &doubled).unwrap(), array![[6.0]]);
    }

    #[test]
    fn limit_violation_is_listed() {
        let s = Skeleton::humanoid();
        let mut theta = Array2::zeros((3, s.angle_dofs()));
        theta[[1, 7]] = s.limits_max()[7] + 0.1;
        let motion = Motion::new(Representation::AngleSpace, theta).unwrap();
        let v = check_on_manifold(&s, &motion, &ManifoldTolerance::default()).unwrap();
        assert!(!v.on_manifold);
        assert_eq!(v.violations.len(), 1);
        assert!(matches!(
            v.violations[0],
            Violation::JointLimit { frame: 1, dof: 7, .. }
        ));
        let pos = forward_kinematics(&s, &motion).unwrap();
        let v = check_on_manifold(&s, &pos, &ManifoldTolerance::default()).unwrap();
        assert!(!v.on_manifold);
        assert!(v
            .violations
            .iter()
            .all(|x| matches!(x, Violation::JointLimit { frame: 1, dof: 7, .. })));
    }
}
