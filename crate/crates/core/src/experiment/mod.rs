//! Experiment stages, configuration, persistence and reporting.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod scenario;
pub mod stages;

pub use config::ExperimentConfig;
pub use report::report;
pub use stages::{run_explore, run_inspect, run_modes, run_optimize, run_sweep, Manifest, StageSummary};
