//! Command-line pipeline and `/v1` HTTP service for relaxnav.

pub mod commands;
pub mod render;
pub mod service;
