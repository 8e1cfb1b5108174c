//! Configuration, pipeline verbs and file outputs.

pub mod bundle;
pub mod commands;
pub mod config;
