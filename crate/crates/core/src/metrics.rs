//! Evaluation quantities for batches of (original, adversarial) pairs.
//!
//! For `N` pairs of `n`-frame motions:
//!
//! ```text
//! l     = Σ ‖x − x'‖ / (nN)                    joint position deviation
//! Δa    = Σ ‖ẍ − ẍ'‖ / (nN)                    joint acceleration deviation
//! Δα    = Σ ‖θ̈ − θ̈'‖ / (nN)                   angular acceleration deviation
//! ΔB/B  = mean over pairs, frames, bones of |B' − B| / B
//! OM    = fraction of adversaries passing the on-manifold test
//! ```
//!
//! Norms run over all frames and DoFs of a motion. `B` is the original
//! motion's bone length in the same frame.

use serde::{Deserialize, Serialize};

use crate::attack::BatchEntry;
use crate::classifier::LabeledMotion;
use crate::error::{Error, Result};
use crate::kinematics::{
    bone_lengths, check_on_manifold, forward_kinematics, inverse_kinematics, second_derivative,
    ManifoldTolerance,
};
use crate::motion::{Motion, Representation};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    pub tolerance: ManifoldTolerance,
    /// Compute Δα and OM, which need joint angles.
    pub angular: bool,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        Self {
            tolerance: ManifoldTolerance::default(),
            angular: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub l: f64,
    pub delta_a: f64,
    pub delta_alpha: Option<f64>,
    pub bone_deviation: f64,
    pub on_manifold: Option<f64>,
    pub success_rate: Option<f64>,
    pub mean_queries: Option<f64>,
}

fn frob(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn positions(skeleton: &Skeleton, m: &Motion) -> Result<Motion> {
    match m.representation() {
        Representation::PositionSpace => Ok(m.clone()),
        Representation::AngleSpace => forward_kinematics(skeleton, m),
    }
}

fn angles(skeleton: &Skeleton, m: &Motion) -> Result<Motion> {
    match m.representation() {
        Representation::AngleSpace => Ok(m.clone()),
        Representation::PositionSpace => Ok(inverse_kinematics(skeleton, m, None)?.0),
    }
}

/// Deviation metrics over `pairs` of (original, adversarial) motions.
/// Deviations are measured in the motions' own representation; bone
/// lengths and OM go through kinematics as needed.
pub fn compute_metrics(
    pairs: &[(Motion, Motion)],
    skeleton: &Skeleton,
    opts: &MetricsOptions,
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = pairs[0].0.n_frames();
    let mut l = 0.0;
    let mut da = 0.0;
    let mut dalpha = 0.0;
    let mut bone = 0.0;
    let mut on = 0usize;
    for (x, xp) in pairs {
        x.check_same_shape(xp)?;
        if x.n_frames() != n {
            return Err(Error::DimensionMismatch(format!(
                "pairs mix {n}- and {}-frame motions",
                x.n_frames()
            )));
        }
        l += x.distance(xp)?;
        da += frob(&second_derivative(x)?, &second_derivative(xp)?);
        let (px, pxp) = (positions(skeleton, x)?, positions(skeleton, xp)?);
        let (bx, bxp) = (bone_lengths(skeleton, &px)?, bone_lengths(skeleton, &pxp)?);
        bone += bx
            .iter()
            .zip(bxp.iter())
            .map(|(b, bp)| (bp - b).abs() / b)
            .sum::<f64>()
            / bx.len().max(1) as f64;
        if opts.angular {
            let (ax, axp) = (angles(skeleton, x)?, angles(skeleton, xp)?);
            dalpha += frob(&second_derivative(&ax)?, &second_derivative(&axp)?);
            if check_on_manifold(skeleton, xp, &opts.tolerance)?.on_manifold {
                on += 1;
            }
        }
    }
    let count = pairs.len() as f64;
    let nn = n as f64 * count;
    Ok(MetricsReport {
        samples: pairs.len(),
        l: l / nn,
        delta_a: da / nn,
        delta_alpha: opts.angular.then_some(dalpha / nn),
        bone_deviation: bone / count,
        on_manifold: opts.angular.then_some(on as f64 / count),
        success_rate: None,
        mean_queries: None,
    })
}

/// Metrics of a batch attack. Skipped motions are left out; failed ones
/// count against the success rate.
pub fn batch_metrics(
    entries: &[BatchEntry],
    targets: &[LabeledMotion],
    skeleton: &Skeleton,
    opts: &MetricsOptions,
) -> Result<MetricsReport> {
    let mut pairs = Vec::new();
    let mut queries = 0u64;
    let mut attempted = 0usize;
    for e in entries {
        match e {
            BatchEntry::Attacked { index, result } => {
                attempted += 1;
                queries += result.queries;
                pairs.push((targets[*index].motion.clone(), result.adversarial.clone()));
            }
            BatchEntry::Failed { .. } => attempted += 1,
            BatchEntry::Skipped { .. } => {}
        }
    }
    let mut report = compute_metrics(&pairs, skeleton, opts)?;
    report.success_rate = Some(pairs.len() as f64 / attempted as f64);
    report.mean_queries = Some(queries as f64 / pairs.len() as f64);
    Ok(report)
}

/// `C × C` counts with rows indexed by the original label and columns by
/// the label after the attack.
pub fn confusion_matrix(records: &[(usize, usize)], classes: usize) -> Result<Vec<Vec<u64>>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for &(a, b) in records {
        for label in [a, b] {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        m[a][b] += 1;
    }
    Ok(m)
}

/// Equal-width buckets starting at zero; values past the last edge land in
/// the last bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucketing {
    pub width: f64,
    pub buckets: usize,
}

impl Bucketing {
    fn index(&self, v: f64) -> usize {
        ((v / self.width).floor().max(0.0) as usize).min(self.buckets - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationHistogram {
    pub bucketing: Bucketing,
    pub on_manifold: Vec<u64>,
    pub off_manifold: Vec<u64>,
}

/// Histogram of per-sample `‖x − x'‖` split by whether `x'` is on the
/// manifold.
pub fn deviation_histogram(
    pairs: &[(Motion, Motion)],
    skeleton: &Skeleton,
    tolerance: &ManifoldTolerance,
    bucketing: Bucketing,
) -> Result<DeviationHistogram> {
    let samples = pairs
        .iter()
        .map(|(x, xp)| {
            Ok((
                x.distance(xp)?,
                check_on_manifold(skeleton, xp, tolerance)?.on_manifold,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    histogram_of(&samples, bucketing)
}

/// Histogram of precomputed `(deviation, on_manifold)` samples.
pub fn histogram_of(samples: &[(f64, bool)], bucketing: Bucketing) -> Result<DeviationHistogram> {
    if bucketing.buckets == 0 || !(bucketing.width > 0.0) {
        return Err(Error::InvalidConfig(vec![
            "histogram: need a positive width and at least one bucket".into(),
        ]));
    }
    let mut on_manifold = vec![0; bucketing.buckets];
    let mut off_manifold = vec![0; bucketing.buckets];
    for &(d, on) in samples {
        let i = bucketing.index(d);
        if on {
            on_manifold[i] += 1;
        } else {
            off_manifold[i] += 1;
        }
    }
    Ok(DeviationHistogram {
        bucketing,
        on_manifold,
        off_manifold,
    })
}

/// Whether the running mean of `values` changed by less than `rel_tol`
/// (relative) between the first half and the whole series.
pub fn stabilized(values: &[f64], rel_tol: f64) -> bool {
    if values.len() < 2 {
        return false;
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let full = mean(values);
    let half = mean(&values[..values.len() / 2]);
    let scale = full.abs().max(half.abs());
    scale == 0.0 || (full - half).abs() <= rel_tol * scale
}

/// Plain-text table with one row per labelled report.
pub fn render_table(rows: &[(&str, &MetricsReport)]) -> String {
    let opt = |v: Option<f64>, scale: f64| match v {
        Some(v) if scale == 1.0 => format!("{v:.6}"),
        Some(v) => format!("{:.2}", v * scale),
        None => "-".into(),
    };
    let mut out = format!(
        "{:<16} {:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>10}\n",
        "run", "N", "l", "Δa", "Δα", "ΔB/B %", "OM %", "SR %", "queries"
    );
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<16} {:>6} {:>10.6} {:>10.6} {:>10} {:>10.4} {:>8} {:>8} {:>10}\n",
            name,
            r.samples,
            r.l,
            r.delta_a,
            opt(r.delta_alpha, 1.0),
            r.bone_deviation * 100.0,
            opt(r.on_manifold, 100.0),
            opt(r.success_rate, 100.0),
            r.mean_queries
                .map(|q| format!("{q:.1}"))
                .unwrap_or_else(|| "-".into()),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_counts() {
        let m = confusion_matrix(&[(0, 3), (1, 3), (2, 3), (0, 3)], 4).unwrap();
        assert_eq!(m[0][3], 2);
        assert!(m.iter().all(|r| r[..3].iter().all(|&v| v == 0)));
        assert!(confusion_matrix(&[(0, 4)], 4).is_err());
        assert_eq!(confusion_matrix(&[], 2).unwrap(), vec![vec![0, 0], vec![0, 0]]);
    }

    #[test]
    fn histogram_clamps_and_conserves_mass() {
        let b = Bucketing {
            width: 0.5,
            buckets: 3,
        };
        let h = histogram_of(&[(0.0, true), (0.7, false), (9.0, true), (1.2, false)], b).unwrap();
        assert_eq!(h.on_manifold, vec![1, 0, 1]);
        assert_eq!(h.off_manifold, vec![0, 1, 1]);
    }

    #[test]
    fn stabilization_check() {
        assert!(stabilized(&[1.0, 1.0, 1.01, 0.99], 0.02));
        assert!(!stabilized(&[1.0, 1.0, 2.0, 2.0], 0.02));
        assert!(!stabilized(&[1.0], 0.02));
    }
}
