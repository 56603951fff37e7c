//! Deployment model: where partitions live and what a query costs there.
//!
//! Placement hashes each pid to a node. [`simulate_query`] replays a search
//! and charges every level one round trip plus the slowest involved node's
//! disk and compute time. [`estimate_throughput`] turns mean per-query
//! demands into a capacity bound, `min over resources of
//! nodes·capacity / (β·demand)`, and [`simulate_closed_loop`] checks that
//! bound by running the same traces through per-node FIFO servers.

mod des;
mod model;
mod placement;
mod sim;

pub use des::{simulate_closed_loop, DesConfig, DesResult};
pub use model::ClusterModel;
pub use placement::{placement_hash, Placement};
pub use sim::{
    estimate_from_reports, estimate_throughput, measure_beta, node_loads, place, simulate_query, simulate_workload,
    throughput_from_demand, Demand, LevelCost, NodeCounters, NodeWork, QueryCostReport, Resource, ThroughputEstimate,
};
