//! Command implementations behind the `tresnet` binary.
//!
//! Each command module owns its flag struct and a `cmd_*` entry point, so
//! integration tests can drive the commands in-process; the binary is a
//! thin parser and dispatcher around them.

pub mod analyze;
pub mod config;
pub mod errors;
pub mod evaluate;
pub mod pipeline;
pub mod predict;
pub mod svg;
pub mod synth;
pub mod train;
