//! IO, CLI plumbing and benchmarks around [`proxtrace_core`].

pub mod bench;
pub mod commands;
pub mod config;
pub mod formats;
pub mod geojson;
pub mod parallel;

pub use proxtrace_core as core;
