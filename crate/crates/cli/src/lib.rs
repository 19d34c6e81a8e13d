//! Configuration, sweep orchestration and CSV/SVG output for the `swaprelay` binary.

pub mod config;
pub mod plot;
pub mod runner;
pub mod table;

pub use config::{parse_config, ConfigBuilder, ConfigError, GridSpec, RunConfig};
pub use runner::{run_sweep, CliError, Crossing, SweepOutcome};
