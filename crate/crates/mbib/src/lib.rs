//! File formats, experiment runner, sweeps and the command-line harness for
//! Markov-blanket information bottlenecks. The numerical work lives in
//! [`mbib_core`], re-exported here as [`core`].

pub mod config;
pub mod error;
pub mod io;
pub mod model;
pub mod runner;
pub mod sweep;
pub mod theory;

pub use mbib_core as core;

pub use config::{ExperimentConfig, Method, Scope};
pub use error::{CliError, Result};
