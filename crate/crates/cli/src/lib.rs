//! Batch orchestration, presets, analysis pipeline and reporting for the
//! subsystem-code threshold simulator. The `tsc` binary is a thin wrapper
//! over these modules.

pub mod analyze;
pub mod batch;
pub mod config;
pub mod preset;
pub mod report;
pub mod svg;
