//! Experiment driver: configuration files, runs with manifests, sweeps,
//! aggregation, plots and the `aoirelay` CLI.

pub mod aggregate;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod plot;
pub mod runs;
pub mod sweeps;

pub use config::{ConfigError, ExperimentConfig};
pub use runs::{Manifest, PolicyKind, Summary};
