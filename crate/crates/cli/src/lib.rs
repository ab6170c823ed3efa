//! Command-line and HTTP front ends of the cqkit engine.
//!
//! Both surfaces go through the same pipeline functions and write artifacts
//! with the workspace encoding, so identical inputs give identical files.
//! Failures are reported as [`error::ApiError`] with a stable code.

pub mod cli;
pub mod config;
pub mod error;
pub mod server;
pub mod service;
