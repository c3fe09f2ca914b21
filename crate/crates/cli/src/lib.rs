//! Command-line driver for the dqpe toolkit.

pub mod args;
pub mod config;
pub mod error;
pub mod run;
pub mod studies;
