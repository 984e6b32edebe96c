//! Command-line front end for `ebsde-core`: JSON input formats, run
//! configuration and reproducible reports.

pub mod config;
pub mod error;
pub mod format;
pub mod report;
pub mod run;

pub use config::{Command, RunConfig};
pub use error::{CliError, ErrorKind};
pub use report::{default_path, write_report, Report, OUT_DIR_ENV};
pub use run::run;
