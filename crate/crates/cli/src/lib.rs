//! Reproducible experiments on top of the `hycop` library: configuration,
//! training, evaluation, baselines, diagnostics, transfer and ablations.

pub mod ablation;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use commands::{run, Cli};
pub use config::Config;
pub use error::{CliError, CliResult};
