//! Batch front end: configuration, dataset generation and ingestion, the
//! selection pipeline, reports and heatmap grids.

pub mod config;
pub mod error;
pub mod heatmap;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod study;
pub mod verify;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::{run_pipeline, RunOutput};
