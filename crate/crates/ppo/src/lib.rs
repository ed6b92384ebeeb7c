//! Proximal policy optimization with an asymmetric actor-critic.
//!
//! The actor sees noisy, delayed observations; the critic sees privileged
//! simulator state. Both are plain ELU MLPs implemented on `ndarray`.

pub mod checkpoint;
pub mod error;
pub mod gae;
pub mod nn;
pub mod normalizer;
pub mod policy;
pub mod ppo;
pub mod schedule;

pub use checkpoint::Checkpoint;
pub use error::{PpoError, Result};
pub use gae::gae;
pub use policy::{ActMode, ActOutput, Agent, GaussianPolicy, NetShapes};
pub use ppo::{Learner, PpoConfig, RolloutBatch, UpdateStats};
pub use schedule::lr_schedule;
