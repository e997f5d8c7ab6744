//! Library half of the experiment runner: configuration with full
//! defaulting, the seeded run/sweep drivers, and result/plot-data emission.
//! The `hdqt` binary is a thin argument-parsing shell over this.

pub mod config;
pub mod emit;
pub mod runner;

pub use config::{DatasetConfig, ExperimentConfig, Method, QuantMode};
pub use runner::{run_experiment, sweep, RunRecord, SweepAxis};
