//! Command-line harness around `dforce-core`: config files, checkpoints,
//! frame output and the experiment pipeline.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod frames;
pub mod io;
