//! Library side of the `mmevent` experiment runner.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod extract;
