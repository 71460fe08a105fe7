//! Command-line front end: configuration, CSV ingestion, and the five
//! subcommands (`fit`, `predict`, `semivariogram`, `simulate`, `bench`).
//! The numerical work lives in the `stlmm` crate; this one turns files and
//! flags into engine calls and engine results into CSV tables.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

pub use config::Config;
pub use error::{CliError, Result};
