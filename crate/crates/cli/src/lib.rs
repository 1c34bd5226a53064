//! Configuration, persistence, plotting and subcommands for the `skt` tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;
pub mod svg;
