//! Experiment harness for ambient-potential identification: JSON configs,
//! twin-measurement generation, solver dispatch and CSV reports.

pub mod batch;
pub mod config;
pub mod output;
pub mod pipeline;

pub use batch::{expand, run_batch, write_summary, BatchEntry};
pub use config::{ExperimentConfig, Mode};
pub use pipeline::{run_experiment, Outcome, RunReport};
