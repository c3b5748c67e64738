//! Experiment harness: config parsing, batch runs across policies × speeds ×
//! seeds, the aggregate results table, verification and plots.

pub mod config;
pub mod error;
pub mod plot;
pub mod records;
pub mod run;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use run::{run_experiments, RunOptions, RunReport};
pub use verify::verify_run;
