//! Drivers around `heliogen-core`: dataset generation, training, latent
//! inference and the benchmark, plus the binary file formats, the CLI and
//! the HTTP service.

pub mod cli;
pub mod config;
pub mod error;
pub mod format;
pub mod pipeline;
pub mod report;
pub mod service;

pub use error::{Error, Result};
pub use heliogen_core as core;
