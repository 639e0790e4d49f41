//! Command-line front end: instance generation, benchmarking, the search
//! itself, replay of recorded searches, and report tables.

// NaN must fail these checks, so they are written as negations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod gen;
pub mod tables;

pub use commands::{run, Cli};
pub use config::RunConfig;
