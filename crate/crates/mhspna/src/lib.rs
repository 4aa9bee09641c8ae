//! Command-line companion to `mhspna-core`: file formats (GeoJSON networks,
//! counts and flow CSVs, model JSON), project configuration and the
//! subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod geojson;
pub mod synth;
