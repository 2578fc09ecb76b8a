//! Command-line pipeline around `dno_core`: configuration, run manifests,
//! dataset assembly and the stage runners behind the `dno` binary.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 missing input or dependency, 4 simulation failure, 5 training divergence.

pub mod commands;
pub mod config;
pub mod dataset_build;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod stages;

pub use config::PipelineConfig;
pub use error::{exit, CliError, Result};
pub use manifest::RunManifest;
pub use pipeline::{run_pipeline, RunOptions, Stage};
