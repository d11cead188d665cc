//! Std companion to `afc-core`: experiment configuration, published-table
//! fixtures, artifact formats, simulated runs and reports.
#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod formats;
pub mod golden;
pub mod report;

pub use afc_core;
pub use error::{LabError, Result};
