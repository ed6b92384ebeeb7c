//! Training loop, evaluation protocols, ablations, reports and plots for the
//! cube reposing engine.

pub mod ablation;
pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod plot;
pub mod report;
pub mod smoke;
pub mod task;
pub mod trainer;

pub use config::EngineConfig;
pub use error::{HarnessError, Result};
