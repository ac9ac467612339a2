//! Command-line front end and HTTP session service for the makeup pipeline.

pub mod cli;
pub mod commands;
pub mod config;
pub mod service;
pub mod train;
