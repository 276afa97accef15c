//! Batch command-line frontend and serialization layer for multi-view
//! GPR pipeline detection.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;
pub mod svg;
