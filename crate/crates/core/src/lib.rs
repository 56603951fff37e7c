//! Hierarchical vector search over partitioned, multi-level indexes.
//!
//! The crate covers the whole pipeline:
//!
//! - [`dataset`]: vector files, sampling, synthetic mixtures, exact ground truth
//! - [`clustering`]: density-controlled k-means partitioning, boundary
//!   replication and partition shuffling
//! - [`graph`]: the in-memory proximity graph used at the root level, plus the
//!   sharded-traversal probe
//! - [`profiler`]: picks the partition density where read cost starts to climb
//! - [`hierarchy`]: bottom-up index build and top-down bounded-round search
//! - [`cluster`]: hash placement, per-query cost simulation and the
//!   capacity-based throughput model
//! - [`service`]: TCP index-store nodes with near-data scoring and a stateless
//!   query engine
//! - [`report`]: CSV output for experiments
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cluster;
pub mod clustering;
pub mod config;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod metrics;
pub mod profiler;
pub mod report;
pub mod service;
mod topk;
pub mod types;

pub use error::{Error, Result};
pub use types::{distance, Candidate, DenseVector, DistanceMetric, SearchParams, VectorId, VectorSet};
