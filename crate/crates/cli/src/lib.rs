//! Command-line front end: scenario configs, subcommands and report files.

pub mod commands;
pub mod config;
pub mod report;
