//! Command-line front end for the fOU toolkit: configuration resolution,
//! subcommand bodies and report encoding. The `fou` binary is a thin
//! wrapper around [`cli::run`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod report;
