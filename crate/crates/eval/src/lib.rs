//! Benchmark harness around the orchestration core: task sampling, a
//! parallel runner with durable trajectories, metrics, run comparison and
//! an HTTP service for browsing results.

pub mod bench;
pub mod classify;
pub mod compare;
pub mod fixtures;
pub mod gateway;
pub mod manifest;
pub mod metrics;
pub mod record;
pub mod replay;
pub mod runner;
pub mod sample;
pub mod service;
pub mod store;
pub mod trajectory_store;
