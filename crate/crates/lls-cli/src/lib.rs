//! Library surface of the command-line driver: configuration, decay
//! fitting, and spectrum synthesis. The `lls` binary wires these to the
//! subcommands.

pub mod config;
pub mod decay;
pub mod spectrum;
