//! Workload generation, metrics and experiment orchestration.

pub mod experiment;
pub mod metrics;
pub mod synthetic;
pub mod workload;
