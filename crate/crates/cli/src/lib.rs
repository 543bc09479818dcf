//! Command-line pipeline: ingest → graph → color → fidelity → encode → train
//! → report, with content-addressed artifacts and figure-data emission.

pub mod artifact;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use pipeline::{Outcome, Pipeline};
