//! File formats, model archives and the `gradlearn` command-line front end
//! for `gradlearn-core`.
//!
//! Matrices travel as CSV, summaries and models as JSON. Every command that
//! fails prints a one-line JSON diagnostic on stderr and exits with 2 (usage),
//! 3 (data format) or 4 (numerical failure).

pub mod archive;
pub mod cli;
pub mod commands;
pub mod csvio;
pub mod error;
pub mod idx;

pub use error::{CliError, Result};
