//! Command-line and HTTP front ends for the threshold-surface engine.

pub mod commands;
pub mod http;
