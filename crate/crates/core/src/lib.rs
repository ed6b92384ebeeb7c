//! Simulation core for 6-DoF in-hand cube reposing with a three-finger hand:
//! keypoint pose algebra, batched contact dynamics, domain randomization and
//! the reposing task itself.

pub mod domrand;
pub mod env;
pub mod error;
pub mod physics;
pub mod rng;
pub mod spatial;

pub use error::{CoreError, Result};
