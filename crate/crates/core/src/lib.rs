//! Bounded, gated, online-adapting residual control around frozen nominal
//! controllers, with desk-scale plants, mid-episode faults and recovery metrics.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nominal;
pub mod output;
pub mod plant;
pub mod residual;
pub mod sag;

pub use config::{ExperimentConfig, Method, SweepSpec};
pub use error::{Error, Result};
