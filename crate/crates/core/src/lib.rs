//! Separation radii and tests for linear inverse problems with a noisy
//! operator, in the diagonal (sequence-space) formulation.

pub mod bounds;
pub mod error;
pub mod mcharness;
pub mod model;
pub mod presets;
pub mod radii;
pub mod rng;
pub mod seqcore;
pub mod testing;

pub use error::{Error, Result};
