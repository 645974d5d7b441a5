//! Command-line driver: `solve`, `sweep`, `verify`.

mod commands;
pub mod config;
mod verify;

pub use commands::{cmd_solve, cmd_sweep, cmd_verify, format_value, Outcome};
pub use config::{ProblemKind, RunConfig, Target};
pub use verify::{run_suite, Check, SUITES};
