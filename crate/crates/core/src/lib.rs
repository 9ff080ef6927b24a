//! Spine biomechanics from pose keypoints, body meshes and grayscale image
//! sequences: trunk kinematics, Lyapunov stability, mesh anthropometrics,
//! template tracking, a lumped sagittal musculoskeletal spine model and
//! regression-based spinal load estimates.

pub mod anthro;
pub mod error;
pub mod kinematics;
pub mod loads;
pub mod msk;
pub mod signal;
pub mod stability;
pub mod synth;
pub mod track;

pub use error::{Error, Result};
