//! Traversal locality when graph nodes are spread over machines.
//!
//! Nodes are labeled with a k-means cell (one cell per shard), the usual
//! spatially aware layout. A cross-node step is a transition between two
//! consecutive expansions that sit on different shards; the entry expansion
//! has no predecessor and never counts.

use rayon::prelude::*;

use super::{graph_search_sharded, ProximityGraph, TraversalStats};
use crate::clustering::kmeans::kmeans_rows;
use crate::error::{Error, Result};
use crate::types::DenseVector;

#[derive(Clone, Debug, PartialEq)]
pub struct ShardProbe {
    pub shards: usize,
    pub beam: usize,
    pub per_query: Vec<TraversalStats>,
    pub avg_steps: f64,
    pub avg_cross_node_steps: f64,
    pub p99_cross_node_steps: u64,
}

impl ShardProbe {
    /// Mean over queries of cross-node steps / total steps. Queries with a
    /// single expansion contribute 0.
    pub fn cross_node_fraction(&self) -> f64 {
        let n = self.per_query.len().max(1) as f64;
        self.per_query
            .iter()
            .map(|s| if s.expansions == 0 { 0.0 } else { s.cross_node_steps as f64 / s.expansions as f64 })
            .sum::<f64>()
            / n
    }
}

/// Shard label per node: k-means with `k = shards` over the node vectors.
pub fn shard_labels(g: &ProximityGraph, shards: usize, seed: u64) -> Result<Vec<u32>> {
    if shards < 2 {
        return Err(Error::usage("need at least 2 shards"));
    }
    if shards > g.len() {
        return Err(Error::usage(format!("{shards} shards for {} nodes", g.len())));
    }
    Ok(kmeans_rows(g.nodes().data(), g.dim(), shards, g.metric(), seed, 20).assignment)
}

/// Search every query at `beam` under a k-means shard labeling and summarize
/// the traversal steps.
pub fn shard_and_measure(
    g: &ProximityGraph,
    shards: usize,
    queries: &[DenseVector],
    k: usize,
    beam: usize,
    seed: u64,
) -> Result<ShardProbe> {
    let labels = shard_labels(g, shards, seed)?;
    measure_with_labels(g, &labels, queries, k, beam)
}

pub fn measure_with_labels(g: &ProximityGraph, labels: &[u32], queries: &[DenseVector], k: usize, beam: usize) -> Result<ShardProbe> {
    if queries.is_empty() {
        return Err(Error::usage("need at least one query"));
    }
    let per_query: Vec<TraversalStats> = queries
        .par_iter()
        .map(|q| graph_search_sharded(g, q.as_slice(), k, beam, Some(labels)).map(|r| r.1))
        .collect::<Result<_>>()?;
    let n = per_query.len() as f64;
    let mut cross: Vec<u64> = per_query.iter().map(|s| s.cross_node_steps).collect();
    cross.sort_unstable();
    let p99 = cross[((cross.len() as f64 * 0.99).ceil() as usize).clamp(1, cross.len()) - 1];
    Ok(ShardProbe {
        shards: labels.iter().copied().max().map_or(0, |m| m as usize + 1),
        beam,
        avg_steps: per_query.iter().map(|s| s.expansions as f64).sum::<f64>() / n,
        avg_cross_node_steps: per_query.iter().map(|s| s.cross_node_steps as f64).sum::<f64>() / n,
        p99_cross_node_steps: p99,
        per_query,
    })
}
