//! Experiment pipeline behind the `bcsac` command.

pub mod config;
pub mod error;
pub mod layout;
pub mod pipeline;
