//! Command implementations behind the `kpicomp` binary, exposed as a
//! library so integration tests can drive them in-process.

pub mod commands;
pub mod manifest;
pub mod svg;
