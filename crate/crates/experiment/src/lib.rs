//! Experiment driver: configuration, commands and CSV output.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_eval, cmd_learn, cmd_solve, cmd_sweep, run_sweep, Method, SweepRow};
pub use config::{load_config, parse_config, ExperimentConfig, PolicyKind, Sweep, SweepParam};
