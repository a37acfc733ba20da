//! Batch pipeline behind the `usvsthem` command: archive ingestion, corpus
//! filtering, annotation quality, aggregation, analysis, training,
//! significance comparison and embedding figures.

pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use pipeline::{run, Command, Context};
