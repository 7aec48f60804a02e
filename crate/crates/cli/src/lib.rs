//! Config loading, sweep execution and result files for `ccs-nd`.

pub mod config;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, Overrides, ResolvedConfig};
pub use run::{run, RunError, RunManifest, RunOptions, CSV_HEADER};
