//! Experiment orchestration: configuration, deterministic parallel Monte Carlo,
//! offline records and CSV/JSON emission.

pub mod config;
pub mod engine;
pub mod experiments;
pub mod output;
pub mod records;

pub use config::{ExperimentConfig, ObjectConfig, Schedule};
pub use experiments::{
    reference_pattern, replay, run_bands, run_converge, run_kappa_sweep, run_speckle, GhostSetup,
};
