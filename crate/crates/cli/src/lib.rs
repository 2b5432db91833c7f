//! Configuration, sweep presets and command implementations behind the `aoi` binary.

pub mod commands;
pub mod config;
pub mod eval;
pub mod output;
pub mod presets;

pub use commands::{Outcome, SweepKind, EXIT_GATE, EXIT_INPUT, EXIT_OK};
pub use config::{ModelConfig, Point, RunConfig};
