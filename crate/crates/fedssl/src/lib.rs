//! NSL-KDD loading, prepared-dataset artifacts, checkpoints, the threaded
//! round runner, comparison suite and reports, on top of `fedssl-core`.

pub mod artifact;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fsio;
pub mod latency;
pub mod nslkdd;
pub mod report;
pub mod runner;
pub mod suite;
pub mod synthetic;

pub use error::{Error, Result};
