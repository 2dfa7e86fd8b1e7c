pub mod attack;
pub mod classifier;
pub mod defense;
pub mod document;
pub mod error;
pub mod kinematics;
pub mod manifold;
pub mod metrics;
pub mod motion;
pub mod protocol;
pub mod seed;
pub mod skeleton;

mod geom;
mod linalg;

pub use error::{Error, Result};
pub use motion::{Motion, Representation};
pub use skeleton::{Skeleton, SkeletonSpec};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/motions.md")]
    mod motions {}
    #[doc = include_str!("../../../book/src/manifold.md")]
    mod manifold {}
    #[doc = include_str!("../../../book/src/defense.md")]
    mod defense {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
}
