//! Batch front end for the `paraling` library: corpus manifests, cached
//! feature extraction, nested cross-validation, model training/prediction
//! and corpus statistics.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod extract;
pub mod manifest;

pub use error::{CliError, Result};
