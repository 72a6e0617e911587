//! Command-line and HTTP access to transitgrid simulation runs.

pub mod api;
pub mod run;
pub mod summary;

pub use api::{router, SCHEMA_VERSION};
pub use run::{find_run_dir, load_run, simulate, Run, RunError};
pub use summary::HorizonSummary;
