//! Kinematic trees with reference bone lengths and joint limits.
//!
//! Every non-root joint owns the bone that connects it to its parent. That
//! bone swings with two intrinsic Euler angles `(a, b)` expressed in a
//! per-bone rest frame whose `+y` axis points along the bone: first a
//! rotation by `a` about the rest-frame `z` axis, then by `b` about the
//! rotated `x` axis. At `a = b = 0` every bone points along its rest offset.
//! The twist about the bone axis is not a degree of freedom, so joint
//! positions determine the angles up to the branch `(a, b) ~ (a + π, π − b)`.
//!
//! The angle-space layout of a frame is `[tx, ty, tz, a₁, b₁, a₂, b₂, …]`:
//! the root translation relative to its rest position followed by the swing
//! pair of each bone in joint-index order. The position-space layout is
//! `[x₀, y₀, z₀, x₁, …]`, one triple per joint.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Mat3, Vec3};

/// File form of a [`Skeleton`]; arrays are indexed by joint except the
/// limits, which are indexed by angle-space DoF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    /// Parent joint index; `null` for the root.
    pub parents: Vec<Option<usize>>,
    /// Rest direction of the bone ending at each joint. The root entry is
    /// the root's rest position instead.
    pub offsets: Vec<[f64; 3]>,
    /// Reference bone lengths; the root entry is unused and conventionally 0.
    pub lengths: Vec<f64>,
    pub limits_min: Vec<f64>,
    pub limits_max: Vec<f64>,
    pub spinal_flags: Vec<bool>,
}

/// A validated kinematic tree. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SkeletonSpec", into = "SkeletonSpec")]
pub struct Skeleton {
    spec: SkeletonSpec,
    root: usize,
    order: Vec<usize>,
    children: Vec<Vec<usize>>,
    bone_of_joint: Vec<Option<usize>>,
    bone_joints: Vec<usize>,
    directions: Vec<Vec3>,
    rest_frames: Vec<Mat3>,
}

/// Number of leading angle-space DoFs holding the root translation.
pub const ROOT_DOFS: usize = 3;

impl TryFrom<SkeletonSpec> for Skeleton {
    type Error = Error;

    fn try_from(spec: SkeletonSpec) -> Result<Self> {
        Skeleton::new(spec)
    }
}

impl From<Skeleton> for SkeletonSpec {
    fn from(s: Skeleton) -> Self {
        s.spec
    }
}

impl Skeleton {
    pub fn new(spec: SkeletonSpec) -> Result<Self> {
        let j = spec.parents.len();
        let bad = |msg: String| Err(Error::InvalidSkeleton(msg));
        if j == 0 {
            return bad("no joints".into());
        }
        for (name, len) in [
            ("offsets", spec.offsets.len()),
            ("lengths", spec.lengths.len()),
            ("spinal_flags", spec.spinal_flags.len()),
        ] {
            if len != j {
                return bad(format!("{name} has {len} entries for {j} joints"));
            }
        }
        let dofs = ROOT_DOFS + 2 * (j - 1);
        for (name, len) in [
            ("limits_min", spec.limits_min.len()),
            ("limits_max", spec.limits_max.len()),
        ] {
            if len != dofs {
                return bad(format!("{name} has {len} entries, expected {dofs}"));
            }
        }

        let roots: Vec<usize> = (0..j).filter(|&i| spec.parents[i].is_none()).collect();
        if roots.len() != 1 {
            return bad(format!("expected exactly one root, found {}", roots.len()));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); j];
        for (i, p) in spec.parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= j {
                    return bad(format!("joint {i} has parent {p} out of range"));
                }
                children[p].push(i);
            }
        }
        let mut order = Vec::with_capacity(j);
        let mut stack = vec![root];
        while let Some(i) = stack.pop() {
            order.push(i);
            stack.extend(children[i].iter().rev());
        }
        if order.len() != j {
            return bad("parent links contain a cycle".into());
        }

        let mut bone_of_joint = vec![None; j];
        let mut bone_joints = Vec::with_capacity(j - 1);
        let mut directions = vec![[0.0; 3]; j];
        let mut rest_frames = vec![geom::IDENTITY; j];
        for i in 0..j {
            if !spec.offsets[i].iter().all(|v| v.is_finite()) {
                return bad(format!("joint {i} has a non-finite offset"));
            }
            if i == root {
                continue;
            }
            let len = spec.lengths[i];
            if !(len.is_finite() && len > 0.0) {
                return bad(format!("bone of joint {i} has length {len}"));
            }
            let n = geom::norm(spec.offsets[i]);
            if n < 1e-12 {
                return bad(format!("bone of joint {i} has a zero rest direction"));
            }
            let u = geom::scale(spec.offsets[i], 1.0 / n);
            directions[i] = u;
            rest_frames[i] = geom::align_y_to(u);
            bone_of_joint[i] = Some(bone_joints.len());
            bone_joints.push(i);
        }
        for d in 0..dofs {
            let (lo, hi) = (spec.limits_min[d], spec.limits_max[d]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!("dof {d} has limits [{lo}, {hi}]"));
            }
        }

        Ok(Self {
            spec,
            root,
            order,
            children,
            bone_of_joint,
            bone_joints,
            directions,
            rest_frames,
        })
    }

    pub fn spec(&self) -> &SkeletonSpec {
        &self.spec
    }

    pub fn joint_count(&self) -> usize {
        self.spec.parents.len()
    }

    pub fn bone_count(&self) -> usize {
        self.bone_joints.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.spec.parents[joint]
    }

    pub fn children(&self, joint: usize) -> &[usize] {
        &self.children[joint]
    }

    /// Joints in an order where every parent precedes its children.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Child joint of each bone, in bone order.
    pub fn bone_joints(&self) -> &[usize] {
        &self.bone_joints
    }

    pub fn bone_of_joint(&self, joint: usize) -> Option<usize> {
        self.bone_of_joint[joint]
    }

    pub fn reference_length(&self, bone: usize) -> f64 {
        self.spec.lengths[self.bone_joints[bone]]
    }

    pub fn reference_lengths(&self) -> Vec<f64> {
        (0..self.bone_count())
            .map(|b| self.reference_length(b))
            .collect()
    }

    pub fn root_rest_position(&self) -> [f64; 3] {
        self.spec.offsets[self.root]
    }

    pub fn is_spinal(&self, joint: usize) -> bool {
        self.spec.spinal_flags[joint]
    }

    /// Angle-space DoF count `3 + 2·bones`.
    pub fn angle_dofs(&self) -> usize {
        ROOT_DOFS + 2 * self.bone_count()
    }

    /// Position-space DoF count `3·joints`.
    pub fn position_dofs(&self) -> usize {
        3 * self.joint_count()
    }

    /// Angle-space DoFs driven by `joint`: the root translation for the
    /// root, the swing pair of its bone otherwise.
    pub fn dof_range(&self, joint: usize) -> Range<usize> {
        match self.bone_of_joint[joint] {
            None => 0..ROOT_DOFS,
            Some(b) => ROOT_DOFS + 2 * b..ROOT_DOFS + 2 * b + 2,
        }
    }

    pub fn limits_min(&self) -> &[f64] {
        &self.spec.limits_min
    }

    pub fn limits_max(&self) -> &[f64] {
        &self.spec.limits_max
    }

    pub(crate) fn direction(&self, joint: usize) -> Vec3 {
        self.directions[joint]
    }

    pub(crate) fn rest_frame(&self, joint: usize) -> &Mat3 {
        &self.rest_frames[joint]
    }

    /// Whether `descendant` lies in the subtree rooted at `joint` (inclusive).
    pub fn in_subtree(&self, joint: usize, descendant: usize) -> bool {
        let mut cur = Some(descendant);
        while let Some(c) = cur {
            if c == joint {
                return true;
            }
            cur = self.spec.parents[c];
        }
        false
    }

    /// Position-space weights: 0 for the three coordinates of every spinal
    /// joint, 1 elsewhere.
    pub fn spinal_mask(&self) -> Vec<f64> {
        self.spec
            .spinal_flags
            .iter()
            .flat_map(|&s| [if s { 0.0 } else { 1.0 }; 3])
            .collect()
    }

    /// An 11-joint humanoid: pelvis (root), spine, head, two arms and two
    /// legs with two bones each. Pelvis, spine and head are spinal.
    pub fn humanoid() -> Self {
        let parents = vec![
            None,
            Some(0),
            Some(1),
            Some(1),
            Some(3),
            Some(1),
            Some(5),
            Some(0),
            Some(7),
            Some(0),
            Some(9),
        ];
        let offsets = vec![
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.4, -0.9, 0.1],
            [0.0, -1.0, 0.0],
            [-0.4, -0.9, 0.1],
            [0.0, -1.0, 0.0],
            [0.2, -1.0, 0.0],
            [0.0, -1.0, 0.05],
            [-0.2, -1.0, 0.0],
            [0.0, -1.0, 0.05],
        ];
        let lengths = vec![0.0, 0.5, 0.25, 0.3, 0.28, 0.3, 0.28, 0.45, 0.45, 0.45, 0.45];
        let spinal_flags = vec![
            true, true, true, false, false, false, false, false, false, false, false,
        ];
        // spine, head, l upper arm, l forearm, r upper arm, r forearm,
        // l thigh, l shin, r thigh, r shin
        let swing = [0.5, 0.6, 1.2, 1.3, 1.2, 1.3, 1.0, 1.1, 1.0, 1.1];
        let mut limits_min = vec![-2.0; ROOT_DOFS];
        let mut limits_max = vec![2.0; ROOT_DOFS];
        for s in swing {
            limits_min.extend([-s, -s]);
            limits_max.extend([s, s]);
        }
        Self::new(SkeletonSpec {
            parents,
            offsets,
            lengths,
            limits_min,
            limits_max,
            spinal_flags,
        })
        .expect("built-in humanoid is valid")
    }

    /// A chain along `+x` from a root at the origin with the given bone
    /// lengths; swing limits of ±`limit` radians.
    pub fn chain(lengths: &[f64], limit: f64) -> Result<Self> {
        let j = lengths.len() + 1;
        let parents = (0..j).map(|i| i.checked_sub(1)).collect();
        let mut offsets = vec![[1.0, 0.0, 0.0]; j];
        offsets[0] = [0.0; 3];
        let mut all_lengths = vec![0.0];
        all_lengths.extend_from_slice(lengths);
        let dofs = ROOT_DOFS + 2 * lengths.len();
        let mut limits_min = vec![-limit; dofs];
        let mut limits_max = vec![limit; dofs];
        limits_min[..ROOT_DOFS].fill(-10.0);
        limits_max[..ROOT_DOFS].fill(10.0);
        Self::new(SkeletonSpec {
            parents,
            offsets,
            lengths: all_lengths,
            limits_min,
            limits_max,
            spinal_flags: vec![false; j],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SkeletonSpec {
        Skeleton::humanoid().spec().clone()
    }

    #[test]
    fn humanoid_layout() {
        let s = Skeleton::humanoid();
        assert_eq!(s.joint_count(), 11);
        assert_eq!(s.bone_count(), 10);
        assert_eq!(s.angle_dofs(), 23);
        assert_eq!(s.position_dofs(), 33);
        assert_eq!(s.dof_range(0), 0..3);
        assert_eq!(s.dof_range(1), 3..5);
        assert_eq!(s.dof_range(10), 21..23);
        let order = s.topological_order();
        for &j in order {
            if let Some(p) = s.parent(j) {
                let pj = order.iter().position(|&x| x == p).unwrap();
                let jj = order.iter().position(|&x| x == j).unwrap();
                assert!(pj < jj);
            }
        }
        assert_eq!(&s.spinal_mask()[..9], &[0.0; 9]);
        assert_eq!(&s.spinal_mask()[9..12], &[1.0; 3]);
    }

    #[test]
    fn rejects_cycles_and_multiple_roots() {
        let mut sp = spec();
        sp.parents[0] = Some(2);
        assert!(Skeleton::new(sp).is_err());

        let mut sp = spec();
        sp.parents[4] = None;
        assert!(Skeleton::new(sp).is_err());
    }

    #[test]
    fn rejects_bad_lengths_and_limits() {
        let mut sp = spec();
        sp.lengths[3] = 0.0;
        assert!(matches!(Skeleton::new(sp), Err(Error::InvalidSkeleton(_))));

        let mut sp = spec();
        sp.limits_min[5] = sp.limits_max[5];
        assert!(Skeleton::new(sp).is_err());

        let mut sp = spec();
        sp.limits_max.pop();
        assert!(Skeleton::new(sp).is_err());
    }

    #[test]
    fn subtree_membership() {
        let s = Skeleton::humanoid();
        assert!(s.in_subtree(1, 6));
        assert!(s.in_subtree(3, 3));
        assert!(!s.in_subtree(3, 5));
        assert!(s.in_subtree(0, 10));
    }
}
