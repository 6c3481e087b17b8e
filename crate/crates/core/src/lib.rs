//! Audio watermark robustness benchmark.
//!
//! Reference watermark schemes, no-box perturbations, black-box and
//! white-box attacks, and an evaluation harness that reports FNR/FPR
//! per perturbation, attack and demographic group.

pub mod attack;
pub mod audio;
pub mod blackbox;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod perturbations;
pub mod schemes;
pub mod seed;
mod subprocess;
pub mod whitebox;

pub use error::{Error, Result};
pub use seed::Seed;
