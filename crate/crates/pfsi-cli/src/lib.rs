//! Library surface of the command-line front end: configuration parsing,
//! the binary state-archive format, and report emission. The binary in
//! `main.rs` wires these into subcommands.

pub mod archive;
pub mod config;
pub mod report;
