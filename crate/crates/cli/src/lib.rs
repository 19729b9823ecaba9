//! Command-line front end: configuration and model files, cone/point files
//! and the `test`, `cone-dist` and `simulate` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod keyvalue;
pub mod model_spec;
pub mod points;

pub use commands::{run, Cli};
pub use config::CliConfig;
pub use error::{CliError, Result};
pub use model_spec::ModelSpec;
