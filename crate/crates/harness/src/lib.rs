//! Configuration, experiment drivers and report writing for the `emlmc`
//! command-line tool.

pub mod config;
pub mod experiments;
pub mod samplers;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use experiments::{run, HarnessError};
