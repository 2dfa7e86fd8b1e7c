//! Self-describing text document holding a skeleton and one motion.
//!
//! ```
//! use mgmw::document::MotionDocument;
//! use mgmw::{Motion, Representation, Skeleton};
//! use ndarray::Array2;
//!
//! let skeleton = Skeleton::chain(&[1.0, 1.0], 1.5).unwrap();
//! let frames = Array2::from_elem((3, skeleton.angle_dofs()), 0.1);
//! let motion = Motion::new(Representation::AngleSpace, frames).unwrap();
//! let text = MotionDocument::new(&skeleton, &motion).unwrap().to_json().unwrap();
//! let back = MotionDocument::from_json(&text).unwrap();
//! assert_eq!(back.motion().unwrap(), motion);
//! ```

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{Motion, Representation};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionDocument {
    pub skeleton: Skeleton,
    pub representation: Representation,
    #[serde(default = "unit_rate")]
    pub frame_rate: f64,
    pub frames: Vec<Vec<f64>>,
}

fn unit_rate() -> f64 {
    1.0
}

impl MotionDocument {
    /// Checks that the motion's width fits the skeleton.
    pub fn new(skeleton: &Skeleton, motion: &Motion) -> Result<Self> {
        check_width(skeleton, motion.representation(), motion.dofs())?;
        Ok(Self {
            skeleton: skeleton.clone(),
            representation: motion.representation(),
            frame_rate: motion.frame_rate(),
            frames: motion.frames().rows().into_iter().map(|r| r.to_vec()).collect(),
        })
    }

    pub fn motion(&self) -> Result<Motion> {
        let n = self.frames.len();
        let m = self.frames.first().map_or(0, Vec::len);
        if let Some(t) = self.frames.iter().position(|r| r.len() != m) {
            return Err(Error::DimensionMismatch(format!(
                "frame {t} has {} values, frame 0 has {m}",
                self.frames[t].len()
            )));
        }
        check_width(&self.skeleton, self.representation, m)?;
        let data = self.frames.iter().flatten().copied().collect();
        let frames = Array2::from_shape_vec((n, m), data)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        Motion::with_frame_rate(self.representation, frames, self.frame_rate)
    }

    /// Shortest round-trip decimal form, so values survive bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_width(skeleton: &Skeleton, representation: Representation, dofs: usize) -> Result<()> {
    let want = match representation {
        Representation::AngleSpace => skeleton.angle_dofs(),
        Representation::PositionSpace => skeleton.position_dofs(),
    };
    if dofs != want {
        return Err(Error::DimensionMismatch(format!(
            "{representation:?} motion has {dofs} DoFs, skeleton needs {want}"
        )));
    }
    Ok(())
}
