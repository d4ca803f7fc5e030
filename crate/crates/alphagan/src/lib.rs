//! File formats, the training runner, reports and the command line around
//! `alphagan-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod montage;
pub mod nifti;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
