//! Experiment harness for adaptive iterative model merging: strategy runs,
//! suite aggregation, result files, snapshot and dataset formats.

pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod run;
pub mod selftest;
pub mod snapshot;
pub mod suite;

pub use config::{ExperimentConfig, Strategy};
pub use error::{HarnessError, Result};
pub use report::emit_reports;
pub use run::{run_task_sequence, RunOutput, RunResult, TrajectoryRecord};
pub use suite::{run_suite, SuiteReport};
