//! Command-line layer over the exact trainer: CSV ingestion, model
//! persistence, cross-validation, and report formatting.

pub mod cv;
pub mod error;
pub mod ingest;
pub mod model_file;

pub use error::{CliError, Result};
