//! Config-driven analysis runner: JSON configuration in, JSON report and CSV
//! plot data out.

pub mod config;
pub mod report;
pub mod run;

pub use config::{AnalysisConfig, ConfigError};
pub use run::{run_analysis, RunError, RunOutcome};
