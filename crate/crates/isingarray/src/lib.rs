//! Std companion of `isingarray-core`: experiment configs, IDX and CSV/PNG
//! file formats, run directories and the command implementations behind the
//! `isingarray` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod idx;

pub use commands::{
    cmd_cliques, cmd_conditional, cmd_resolution, cmd_simulate, cmd_swap, cmd_sweep, cmd_train, load_run, LoadedRun,
};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use isingarray_core as core;
