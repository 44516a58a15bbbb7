//! Experiment harness for `fragstorm-core`: configuration files, replica
//! orchestration, CSV/JSON result tables and the acceptance criteria.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod pool;
pub mod table;

pub use config::{Experiment, ExperimentConfig, Format, RawConfig};
pub use error::{ConfigError, HarnessError};
pub use experiments::{run, Outcome};
pub use pool::Pool;
pub use table::ResultTable;
