//! Command line and local HTTP front end for the rctouch pipeline.

pub mod args;
pub mod commands;
pub mod serve;
