//! Motions: `n` frames of `m` degrees of freedom.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the columns of a [`Motion`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Representation {
    /// Root translation followed by two swing angles per bone, in radians.
    AngleSpace,
    /// `x, y, z` of every joint, in length units.
    PositionSpace,
}

/// A motion of `n` frames by `m` degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    representation: Representation,
    frames: Array2<f64>,
    #[serde(default = "default_frame_rate")]
    frame_rate: f64,
}

fn default_frame_rate() -> f64 {
    1.0
}

impl Motion {
    /// Builds a motion at unit frame rate. Rejects empty or non-finite data.
    pub fn new(representation: Representation, frames: Array2<f64>) -> Result<Self> {
        Self::with_frame_rate(representation, frames, 1.0)
    }

    pub fn with_frame_rate(
        representation: Representation,
        frames: Array2<f64>,
        frame_rate: f64,
    ) -> Result<Self> {
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(Error::InvalidMotion(format!(
                "empty motion ({}x{})",
                frames.nrows(),
                frames.ncols()
            )));
        }
        if let Some(((t, d), v)) = frames.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidMotion(format!(
                "non-finite value {v} at frame {t}, dof {d}"
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::InvalidMotion(format!("frame rate {frame_rate}")));
        }
        Ok(Self {
            representation,
            frames,
            frame_rate,
        })
    }

    /// Builds a motion from a flat row-major vector.
    pub fn from_flat(
        representation: Representation,
        n_frames: usize,
        dofs: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        let frames = Array2::from_shape_vec((n_frames, dofs), data)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Self::new(representation, frames)
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn frames(&self) -> &Array2<f64> {
        &self.frames
    }

    pub fn into_frames(self) -> Array2<f64> {
        self.frames
    }

    pub fn frame(&self, t: usize) -> ArrayView1<'_, f64> {
        self.frames.row(t)
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dofs(&self) -> usize {
        self.frames.ncols()
    }

    /// Row-major copy of the frames.
    pub fn to_flat(&self) -> Array1<f64> {
        Array1::from_iter(self.frames.iter().copied())
    }

    /// Same representation and frame rate, new values. Shape must match.
    pub fn with_frames(&self, frames: Array2<f64>) -> Result<Self> {
        if frames.dim() != self.frames.dim() {
            return Err(Error::DimensionMismatch(format!(
                "expected {:?}, got {:?}",
                self.frames.dim(),
                frames.dim()
            )));
        }
        Self::with_frame_rate(self.representation, frames, self.frame_rate)
    }

    /// Euclidean distance between the flattened motions.
    pub fn distance(&self, other: &Motion) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .frames
            .iter()
            .zip(other.frames.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Per-frame averaged deviation `‖x − x'‖₂ / n`, the attack's stop metric.
    pub fn mean_frame_deviation(&self, other: &Motion) -> Result<f64> {
        Ok(self.distance(other)? / self.n_frames() as f64)
    }

    pub fn check_same_shape(&self, other: &Motion) -> Result<()> {
        if self.representation != other.representation || self.frames.dim() != other.frames.dim()
        {
            return Err(Error::DimensionMismatch(format!(
                "{:?} {:?} vs {:?} {:?}",
                self.representation,
                self.frames.dim(),
                other.representation,
                other.frames.dim()
            )));
        }
        Ok(())
    }

    /// Linear-interpolation resampling in time to `n` frames.
    pub fn resample(&self, n: usize) -> Result<Motion> {
        if n == 0 {
            return Err(Error::InvalidMotion("cannot resample to 0 frames".into()));
        }
        let src = self.n_frames();
        if src == n {
            return Ok(self.clone());
        }
        let m = self.dofs();
        let mut out = Array2::zeros((n, m));
        for t in 0..n {
            let pos = if n == 1 {
                0.0
            } else {
                t as f64 * (src - 1) as f64 / (n - 1) as f64
            };
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            let frac = pos - lo as f64;
            for d in 0..m {
                out[[t, d]] = self.frames[[lo, d]] * (1.0 - frac) + self.frames[[hi, d]] * frac;
            }
        }
        let rate = self.frame_rate * (n.max(2) - 1) as f64 / (src.max(2) - 1) as f64;
        Motion::with_frame_rate(self.representation, out, rate)
    }

    /// Per-DoF mean over frames.
    pub fn mean_pose(&self) -> Array1<f64> {
        self.frames
            .mean_axis(Axis(0))
            .expect("motions are never empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_non_finite() {
        let err = Motion::new(Representation::AngleSpace, array![[0.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMotion(_)));
    }

    #[test]
    fn resample_endpoints_and_midpoint() {
        let m = Motion::new(
            Representation::PositionSpace,
            array![[0.0, 10.0], [1.0, 20.0], [2.0, 30.0]],
        )
        .unwrap();
        let r = m.resample(5).unwrap();
        assert_eq!(r.n_frames(), 5);
        assert_eq!(r.frames()[[0, 0]], 0.0);
        assert_eq!(r.frames()[[4, 1]], 30.0);
        assert!((r.frames()[[1, 0]] - 0.5).abs() < 1e-15);
        assert!((r.frames()[[3, 1]] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn distance_and_frame_deviation() {
        let a = Motion::new(Representation::PositionSpace, array![[0.0, 0.0], [0.0, 0.0]]).unwrap();
        let b = Motion::new(Representation::PositionSpace, array![[3.0, 4.0], [0.0, 0.0]]).unwrap();
        assert_eq!(a.distance(&b).unwrap(), 5.0);
        assert_eq!(a.mean_frame_deviation(&b).unwrap(), 2.5);
    }
}
