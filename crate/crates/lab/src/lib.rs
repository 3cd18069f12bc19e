//! Command-line laboratory around `lfunlab-core`: run configuration, CSV
//! artifacts, q-expansion ingest and a rayon thread pool.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod pool;
pub mod report;

pub use commands::{dispatch, load_form, Check, Outcome};
pub use config::{load_config, Command, ConfigFile, RunConfig};
pub use error::{LabError, Result};
pub use ingest::ingest_qexp;
pub use pool::Pool;
