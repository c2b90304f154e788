//! Configuration files, on-disk formats, threads and the subcommands behind
//! the `koopman-pe` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod threads;

pub use commands::{run, Command, Options};
pub use error::CliError;
pub use threads::Threads;
