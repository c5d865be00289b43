//! Experiment harness around `qesgd-core`: config parsing, CSV trajectories
//! and summaries, convergence-rate fits, and method comparisons.

pub mod config;
pub mod csvio;
pub mod fit;
pub mod report;
pub mod runner;

pub use config::{parse_config, serialize_config, ExperimentConfig};
pub use csvio::{MethodSummary, SUMMARY_HEADER, TRAJECTORY_HEADER};
pub use fit::{fit_convergence_slope, RateFit};
pub use report::compare_methods;
pub use runner::{run_experiment, RunArtifacts};
