//! Scenario registry, configuration, checks and reports behind the
//! `eqdiff` command-line tool.

pub mod checks;
pub mod config;
pub mod error;
pub mod report;
pub mod scenario;
pub mod stats;
pub mod tolerances;

pub use checks::{run_suite, Group};
pub use config::{ConfigFile, RunConfig};
pub use error::{HarnessError, Result};
pub use report::{CheckRecord, Report};
