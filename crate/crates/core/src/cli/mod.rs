//! Config-driven front end: each command loads a [`RunConfig`], runs one
//! stage of the pipeline and writes columnar data plus a JSON manifest into
//! the output directory.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_build_pt, cmd_dynamics, cmd_moments, cmd_sweep, cmd_wcf, cmd_wpd, read_wcf, Outcome};
pub use config::{RunConfig, SweepPoint};
pub use output::DataFile;
