//! Config-driven pipeline over the core library: dataset manifests,
//! deep and strain feature extraction, fusion, train-only selection,
//! classification, evaluation and reports.

pub mod cli;
pub mod compare;
pub mod config;
pub mod error;
pub mod extract;
pub mod fuse;
pub mod manifest;
pub mod report;
pub mod run;
pub mod strain;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use manifest::DatasetManifest;
pub use run::{run_pipeline, RunReport};
