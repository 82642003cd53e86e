//! Experiment and verification harness behind the `mrvcg` binary.

pub mod config;
pub mod experiments;
pub mod report;
pub mod stats;
pub mod verify;
