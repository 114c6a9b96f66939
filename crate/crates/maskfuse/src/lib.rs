//! File formats, configuration and the pipeline runner behind the `maskfuse`
//! command-line tool. The kernels themselves live in `maskfuse_core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;
pub mod report;

pub use crate::config::{PipelineConfig, Stage};
pub use crate::error::{Error, Result};
pub use crate::formats::Diagnostic;
pub use crate::pipeline::{run_pipeline, validate_inputs, DatasetOutcome, RunOutput};
