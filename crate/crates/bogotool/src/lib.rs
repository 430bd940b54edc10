//! File formats, JSON-lines reports, configuration and the command line of
//! bogotool. The numerics live in `bogotool-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;
pub mod presets;
pub mod report;
