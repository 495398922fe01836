//! Experiment harness: configs, parallel runs, reports and file formats.

pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use report::{emit_report, Format, Report};
