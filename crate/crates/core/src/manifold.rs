//! Projection of a perturbed motion back onto the motion manifold.
//!
//! The projection works in two steps. IK maps the perturbed positions to
//! joint angles, which restores every bone length. The angles are then
//! pulled inside the joint limits while staying close to the IK solution
//! and keeping the original motion's angular accelerations:
//!
//! ```text
//! minimize   ‖θ' − θ̃‖² + w‖D θ' − θ̈‖²     subject to  θmin < θ' < θmax
//! ```
//!
//! where `D` is the second-difference operator of
//! [`second_derivative`](crate::kinematics::second_derivative). The
//! objective separates across DoFs, so each DoF is an `n`-variable problem
//! with a pentadiagonal Hessian. It is solved by a primal-dual interior
//! point method: for a decreasing barrier parameter `ν`, damped Newton
//! steps drive the perturbed KKT conditions
//!
//! ```text
//! ∇f(θ') − z_lo + z_hi = 0,   z_lo (θ' − θmin) = ν,   z_hi (θmax − θ') = ν
//! ```
//!
//! to zero, with a fraction-to-boundary rule keeping iterates strictly
//! inside the box and a backtracking line search on the barrier objective
//! `f(θ') − ν Σ ln(θ' − θmin) − ν Σ ln(θmax − θ')`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{self, forward_kinematics, inverse_kinematics, second_derivative};
use crate::linalg::BandedSpd;
use crate::motion::{Motion, Representation};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    /// Weight of the acceleration-matching term.
    pub weight: f64,
    /// Initial barrier parameter as a fraction of the mean box width.
    pub barrier_initial: f64,
    /// Factor applied to the barrier parameter after each outer step.
    pub barrier_decay: f64,
    /// The schedule stops once the barrier parameter falls below this.
    pub barrier_floor: f64,
    /// Newton steps allowed per barrier value.
    pub max_newton: usize,
    /// Inner loops stop once the KKT residual is below this.
    pub kkt_tolerance: f64,
    /// Smallest line-search step before the inner loop gives up.
    pub min_step: f64,
    /// Start point margin as a fraction of each box width.
    pub start_margin: f64,
    /// Output representation; `None` keeps the input's.
    pub output: Option<Representation>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            weight: 0.5,
            barrier_initial: 0.1,
            barrier_decay: 0.2,
            barrier_floor: 1e-9,
            max_newton: 100,
            kkt_tolerance: 1e-10,
            min_step: 1e-12,
            start_margin: 1e-6,
            output: None,
        }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            e.push(format!("projection.weight: must be >= 0, got {}", self.weight));
        }
        if !(self.barrier_initial > 0.0 && self.barrier_initial.is_finite()) {
            e.push("projection.barrier_initial: must be positive".into());
        }
        if !(self.barrier_decay > 0.0 && self.barrier_decay < 1.0) {
            e.push("projection.barrier_decay: must lie in (0, 1)".into());
        }
        if !(self.barrier_floor > 0.0) {
            e.push("projection.barrier_floor: must be positive".into());
        }
        if self.max_newton == 0 {
            e.push("projection.max_newton: must be positive".into());
        }
        if !(self.kkt_tolerance > 0.0) {
            e.push("projection.kkt_tolerance: must be positive".into());
        }
        if !(self.min_step > 0.0 && self.min_step < 1.0) {
            e.push("projection.min_step: must lie in (0, 1)".into());
        }
        if !(self.start_margin > 0.0 && self.start_margin < 0.5) {
            e.push("projection.start_margin: must lie in (0, 0.5)".into());
        }
        e
    }
}

/// A joint-angle projection instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionProblem {
    /// Angles to stay close to, `n × dofs`.
    pub reference: Motion,
    /// Angular accelerations to match (same units as
    /// [`second_derivative`]); `None` drops the term.
    pub target_acceleration: Option<Array2<f64>>,
    pub limits_min: Vec<f64>,
    pub limits_max: Vec<f64>,
}

impl ProjectionProblem {
    pub fn new(
        reference: Motion,
        target_acceleration: Option<Array2<f64>>,
        limits_min: Vec<f64>,
        limits_max: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = reference.frames().dim();
        if limits_min.len() != m || limits_max.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} dofs but {} / {} limits",
                limits_min.len(),
                limits_max.len()
            )));
        }
        if let Some((d, _)) = limits_min
            .iter()
            .zip(&limits_max)
            .enumerate()
            .find(|(_, (lo, hi))| !(lo < hi))
        {
            return Err(Error::InvalidConfig(vec![format!(
                "limits of dof {d} are empty"
            )]));
        }
        if let Some(a) = &target_acceleration {
            if a.dim() != (n, m) {
                return Err(Error::DimensionMismatch(format!(
                    "acceleration target is {:?}, reference {n}x{m}",
                    a.dim()
                )));
            }
            if n < 3 {
                return Err(Error::TooFewFrames {
                    frames: n,
                    required: 3,
                });
            }
        }
        Ok(Self {
            reference,
            target_acceleration,
            limits_min,
            limits_max,
        })
    }

    /// The problem a skeleton's limits define for `reference`.
    pub fn for_skeleton(
        skeleton: &Skeleton,
        reference: Motion,
        target_acceleration: Option<Array2<f64>>,
    ) -> Result<Self> {
        Self::new(
            reference,
            target_acceleration,
            skeleton.limits_min().to_vec(),
            skeleton.limits_max().to_vec(),
        )
    }

    /// Barrier-free objective at `angles`.
    pub fn objective(&self, angles: &Array2<f64>, weight: f64) -> f64 {
        let mut f = (angles - self.reference.frames()).mapv(|v| v * v).sum();
        if let Some(a) = &self.target_acceleration {
            let s = self.reference.frame_rate().powi(2);
            let r = kinematics::second_difference(angles) * s - a;
            f += weight * r.mapv(|v| v * v).sum();
        }
        f
    }
}

/// Progress of one barrier value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub barrier: f64,
    pub newton_steps: usize,
    /// Largest KKT residual over DoFs at the end of the inner loop.
    pub residual: f64,
    /// Barrier-free objective after the inner loop.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub outer: Vec<OuterStep>,
    /// False when an inner loop ran out of Newton steps or the line search
    /// collapsed; the returned iterate is still strictly feasible.
    pub converged: bool,
}

/// One DoF's instance: `min ‖y − ỹ‖² + w‖sDy − a‖²` on `(lo, hi)`.
struct Scalar<'a> {
    reference: Vec<f64>,
    target: Option<Vec<f64>>,
    weight: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    cfg: &'a ProjectionConfig,
}

struct Iterate {
    y: Vec<f64>,
    z_lo: Vec<f64>,
    z_hi: Vec<f64>,
}

/// Unscaled second difference of a single column.
fn d2(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|t| {
            let c = t.clamp(1, n - 2);
            y[c + 1] - 2.0 * y[c] + y[c - 1]
        })
        .collect()
}

fn d2_adjoint(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut out = vec![0.0; n];
    for (t, &v) in g.iter().enumerate() {
        let c = t.clamp(1, n - 2);
        out[c - 1] += v;
        out[c] -= 2.0 * v;
        out[c + 1] += v;
    }
    out
}

impl Scalar<'_> {
    fn objective(&self, y: &[f64]) -> f64 {
        let mut f: f64 = y
            .iter()
            .zip(&self.reference)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if let Some(a) = &self.target {
            f += self.weight
                * d2(y)
                    .iter()
                    .zip(a)
                    .map(|(d, a)| (self.scale * d - a).powi(2))
                    .sum::<f64>();
        }
        f
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = y
            .iter()
            .zip(&self.reference)
            .map(|(a, b)| 2.0 * (a - b))
            .collect();
        if let Some(a) = &self.target {
            let r: Vec<f64> = d2(y)
                .iter()
                .zip(a)
                .map(|(d, a)| self.scale * d - a)
                .collect();
            for (gi, v) in g.iter_mut().zip(d2_adjoint(&r)) {
                *gi += 2.0 * self.weight * self.scale * v;
            }
        }
        g
    }

    /// `2I + 2ws²DᵀD`, assembled column by column from `D`'s rows.
    fn hessian(&self, n: usize) -> BandedSpd {
        let mut h = BandedSpd::zeros(n, 2);
        for i in 0..n {
            h.add(i, i, 2.0);
        }
        if self.target.is_some() {
            let c = 2.0 * self.weight * self.scale * self.scale;
            for t in 0..n {
                let k = t.clamp(1, n - 2);
                let row = [(k - 1, 1.0), (k, -2.0), (k + 1, 1.0)];
                for (i, (a, va)) in row.iter().enumerate() {
                    for (b, vb) in &row[..=i] {
                        h.add(*a, *b, c * va * vb);
                    }
                }
            }
        }
        h
    }

    fn barrier(&self, y: &[f64], nu: f64) -> f64 {
        let logs: f64 = y
            .iter()
            .map(|&v| (v - self.lo).ln() + (self.hi - v).ln())
            .sum();
        self.objective(y) - nu * logs
    }

    fn residual(&self, it: &Iterate, grad: &[f64], nu: f64) -> f64 {
        let mut r: f64 = 0.0;
        for t in 0..it.y.len() {
            let sl = it.y[t] - self.lo;
            let su = self.hi - it.y[t];
            r = r
                .max((grad[t] - it.z_lo[t] + it.z_hi[t]).abs())
                .max((it.z_lo[t] * sl - nu).abs())
                .max((it.z_hi[t] * su - nu).abs());
        }
        r
    }

    fn start(&self) -> Iterate {
        let margin = self.cfg.start_margin * (self.hi - self.lo);
        let y: Vec<f64> = self
            .reference
            .iter()
            .map(|&v| v.clamp(self.lo + margin, self.hi - margin))
            .collect();
        Iterate {
            z_lo: vec![0.0; y.len()],
            z_hi: vec![0.0; y.len()],
            y,
        }
    }

    /// Damped Newton at fixed `ν`. Returns steps taken, final residual and
    /// whether the residual reached the tolerance.
    fn inner(&self, it: &mut Iterate, nu: f64, hess: &BandedSpd) -> Result<(usize, f64, bool)> {
        let n = it.y.len();
        let mut steps = 0;
        loop {
            let g = self.gradient(&it.y);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver("non-finite gradient".into()));
            }
            let res = self.residual(it, &g, nu);
            if res <= self.cfg.kkt_tolerance {
                return Ok((steps, res, true));
            }
            if steps == self.cfg.max_newton {
                return Ok((steps, res, false));
            }
            let mut h = hess.clone();
            let mut rhs = vec![0.0; n];
            for t in 0..n {
                let sl = it.y[t] - self.lo;
                let su = self.hi - it.y[t];
                h.add(t, t, it.z_lo[t] / sl + it.z_hi[t] / su);
                rhs[t] = -(g[t] - nu / sl + nu / su);
            }
            let dy = h
                .solve(&rhs)
                .ok_or_else(|| Error::Solver("Newton matrix is not positive definite".into()))?;
            let mut dz_lo = vec![0.0; n];
            let mut dz_hi = vec![0.0; n];
            let mut alpha_p: f64 = 1.0;
            let mut alpha_d: f64 = 1.0;
            const TAU: f64 = 0.995;
            for t in 0..n {
                let sl = it.y[t] - self.lo;
                let su = self.hi - it.y[t];
                dz_lo[t] = nu / sl - it.z_lo[t] - it.z_lo[t] / sl * dy[t];
                dz_hi[t] = nu / su - it.z_hi[t] + it.z_hi[t] / su * dy[t];
                if dy[t] < 0.0 {
                    alpha_p = alpha_p.min(-TAU * sl / dy[t]);
                }
                if dy[t] > 0.0 {
                    alpha_p = alpha_p.min(TAU * su / dy[t]);
                }
                if dz_lo[t] < 0.0 {
                    alpha_d = alpha_d.min(-TAU * it.z_lo[t] / dz_lo[t]);
                }
                if dz_hi[t] < 0.0 {
                    alpha_d = alpha_d.min(-TAU * it.z_hi[t] / dz_hi[t]);
                }
            }
            let phi0 = self.barrier(&it.y, nu);
            let slope: f64 = dy.iter().zip(&rhs).map(|(d, r)| -d * r).sum();
            let mut alpha = alpha_p;
            let trial = loop {
                let y: Vec<f64> = it.y.iter().zip(&dy).map(|(y, d)| y + alpha * d).collect();
                let phi = self.barrier(&y, nu);
                // Below round-off the merit cannot rank steps; Newton is
                // already in its quadratic regime there.
                let tiny = -slope <= 1e-13 * (1.0 + phi0.abs());
                if phi.is_finite() && (tiny || phi <= phi0 + 1e-4 * alpha * slope) {
                    break Some(y);
                }
                alpha *= 0.5;
                if alpha < self.cfg.min_step {
                    break None;
                }
            };
            steps += 1;
            match trial {
                Some(y) => {
                    it.y = y;
                    let ad = alpha_d.min(1.0);
                    for t in 0..n {
                        it.z_lo[t] += ad * dz_lo[t];
                        it.z_hi[t] += ad * dz_hi[t];
                    }
                }
                None => {
                    // No primal progress possible: the iterate sits at the
                    // barrier minimizer up to round-off.
                    for t in 0..n {
                        it.z_lo[t] = nu / (it.y[t] - self.lo);
                        it.z_hi[t] = nu / (self.hi - it.y[t]);
                    }
                    let res = self.residual(it, &self.gradient(&it.y), nu);
                    return Ok((steps, res, res <= self.cfg.kkt_tolerance * 1e3));
                }
            }
        }
    }
}

/// Solves a projection instance. The result lies strictly inside the box.
pub fn solve_barrier(
    problem: &ProjectionProblem,
    cfg: &ProjectionConfig,
) -> Result<(Motion, SolveReport)> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(Error::InvalidConfig(errors));
    }
    let reference = problem.reference.frames();
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite reference angles".into()));
    }
    let (n, m) = reference.dim();
    let mean_width = problem
        .limits_min
        .iter()
        .zip(&problem.limits_max)
        .map(|(lo, hi)| hi - lo)
        .sum::<f64>()
        / m as f64;
    let scale = problem.reference.frame_rate().powi(2);
    let scalars: Vec<Scalar<'_>> = (0..m)
        .map(|d| Scalar {
            reference: reference.column(d).to_vec(),
            target: problem
                .target_acceleration
                .as_ref()
                .map(|a| a.column(d).to_vec()),
            weight: cfg.weight,
            scale,
            lo: problem.limits_min[d],
            hi: problem.limits_max[d],
            cfg,
        })
        .collect();
    let hessians: Vec<BandedSpd> = scalars.iter().map(|s| s.hessian(n)).collect();
    let mut iterates: Vec<Iterate> = scalars.iter().map(Scalar::start).collect();
    let mut nu = cfg.barrier_initial * mean_width;
    for (s, it) in scalars.iter().zip(&mut iterates) {
        for t in 0..n {
            it.z_lo[t] = nu / (it.y[t] - s.lo);
            it.z_hi[t] = nu / (s.hi - it.y[t]);
        }
    }
    let mut outer = Vec::new();
    let mut converged = true;
    loop {
        let mut newton_steps = 0;
        let mut residual: f64 = 0.0;
        let mut objective = 0.0;
        for ((s, it), h) in scalars.iter().zip(&mut iterates).zip(&hessians) {
            let (steps, res, ok) = s.inner(it, nu, h)?;
            newton_steps += steps;
            residual = residual.max(res);
            objective += s.objective(&it.y);
            converged &= ok;
        }
        log::trace!("barrier {nu:.3e}: {newton_steps} Newton steps, residual {residual:.3e}, objective {objective:.9e}");
        outer.push(OuterStep {
            barrier: nu,
            newton_steps,
            residual,
            objective,
        });
        if nu < cfg.barrier_floor {
            break;
        }
        nu *= cfg.barrier_decay;
    }
    let mut out = Array2::zeros((n, m));
    for (d, it) in iterates.iter().enumerate() {
        for t in 0..n {
            out[[t, d]] = it.y[t];
        }
    }
    let motion = Motion::with_frame_rate(
        Representation::AngleSpace,
        out,
        problem.reference.frame_rate(),
    )?;
    Ok((motion, SolveReport { outer, converged }))
}

/// Projects `x_tilde` onto the manifold, matching the angular accelerations
/// of `x`. Both motions must share the skeleton and frame count; either may
/// be in angle or position space.
pub fn manifold_project(
    skeleton: &Skeleton,
    x_tilde: &Motion,
    x: &Motion,
    cfg: &ProjectionConfig,
) -> Result<(Motion, SolveReport)> {
    if x_tilde.n_frames() != x.n_frames() {
        return Err(Error::DimensionMismatch(format!(
            "perturbed motion has {} frames, original {}",
            x_tilde.n_frames(),
            x.n_frames()
        )));
    }
    let angles_x = match x.representation() {
        Representation::AngleSpace => x.clone(),
        Representation::PositionSpace => inverse_kinematics(skeleton, x, None)?.0,
    };
    let angles_tilde = match x_tilde.representation() {
        Representation::AngleSpace => x_tilde.clone(),
        Representation::PositionSpace => {
            inverse_kinematics(skeleton, x_tilde, Some(&angles_x))?.0
        }
    };
    let accel = if angles_x.n_frames() >= 3 {
        Some(second_derivative(&angles_x)?)
    } else {
        None
    };
    let problem = ProjectionProblem::for_skeleton(skeleton, angles_tilde, accel)?;
    let (angles, report) = solve_barrier(&problem, cfg)?;
    if !report.converged {
        log::debug!("manifold projection returned before full convergence");
    }
    let out = match cfg.output.unwrap_or(x_tilde.representation()) {
        Representation::AngleSpace => angles,
        Representation::PositionSpace => forward_kinematics(skeleton, &angles)?,
    };
    Ok((out, report))
}
