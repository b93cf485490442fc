//! Dataset files, checkpoints, run configuration and the subcommands of the
//! `kgroup` command-line tool, on top of [`kgroup_core`].

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod runner;
pub mod tsv;

pub use error::{Error, Result};
pub use kgroup_core;
