//! Command-line workflows and the `/v1` HTTP API over persisted artifacts.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod http;
