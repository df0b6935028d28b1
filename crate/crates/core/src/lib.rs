//! Relative pose estimation and structure from motion for cameras that move
//! on a sphere with their optical axis through the sphere centre.

pub mod averaging;
pub mod ba;
pub mod error;
pub mod pipeline;
pub mod ransac;
pub mod so3;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
