//! Experiment harness for the particle engine: config parsing, shipped
//! presets, the run driver with its CSV/metadata outputs, and the oracle
//! verification suite. The `mfld` binary is a thin wrapper over this crate.

pub mod config;
pub mod experiment;
pub mod presets;
pub mod verify;
