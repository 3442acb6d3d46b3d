//! File formats, configuration, parallel runners and reports for the
//! `ecrt-core` estimators. The `ecrt` binary is a thin layer over
//! [`run::run_estimation`] and [`run::run_simulation`].

pub mod config;
pub mod error;
pub mod io;
pub mod parallel;
pub mod report;
pub mod run;

pub use config::{OutputFormat, RunConfig};
pub use error::{CliError, Result};
pub use io::{load_csv, write_csv, LoadedData};
pub use report::{EstimateReport, SimulationReport, SummaryReport};
pub use run::{load_dataset, run_estimation, run_simulation, run_summary};
