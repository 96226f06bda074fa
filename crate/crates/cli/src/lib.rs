//! Library side of the `psica` command, so tests can call the commands directly.

pub mod bench;
pub mod commands;
