//! Dataset IO, artifacts, experiment harness and reporting for graph data
//! cloaking. The numerical work lives in `graphcloak_core`.

pub mod artifact;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod harness;
pub mod manifest;
pub mod report;
pub mod tu;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use graphcloak_core as core;
pub use harness::Harness;
pub use report::CloakReport;
