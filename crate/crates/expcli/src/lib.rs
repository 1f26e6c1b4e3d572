//! Configuration, orchestration and report emission for unlearning-readiness
//! experiments.

pub mod config;
pub mod csv;
pub mod error;
pub mod report;
pub mod run;
pub mod snapshot;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use run::{run_duration_sweep, run_experiment, RunArtifacts, SweepSummary};
