//! Balanced-granularity selection.
//!
//! The cost of a density is the mean number of vectors whose distance to the
//! query is computed (centroid-graph search plus partition scans) at the
//! smallest probe count that reaches the target recall. At density 1.0 every
//! partition is a singleton, so the cost is the graph search alone. The
//! chosen density is the coarsest one whose cost stays within `cost_ratio`
//! times that baseline.

use rayon::prelude::*;

use crate::clustering::{partition_at_density, ClusteringResult, PartitionDensity, PartitionOptions};
use crate::dataset::{Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::graph::{build_graph, graph_search, GraphParams, ProximityGraph};
use crate::metrics::recall_at_k;
use crate::topk::TopK;
use crate::types::{DenseVector, VectorId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityProbe {
    pub density: PartitionDensity,
    /// Mean distance computations per query at `probe_count`.
    pub accessed_vectors: f64,
    /// Smallest number of partitions scanned per query that reaches the target.
    pub probe_count: usize,
    /// Mean recall at `probe_count`.
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    /// Densest first.
    pub probes: Vec<DensityProbe>,
    pub baseline_cost: f64,
    pub chosen: PartitionDensity,
    /// True when too few probes were within budget and 0.1 was used instead.
    pub fell_back: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileConfig {
    pub target_recall: f64,
    pub k: usize,
    pub cost_ratio: f64,
    /// Lower end of the density search range.
    pub floor: f64,
    /// Binary search stops once `hi / lo` is at most this.
    pub resolution: f64,
    /// Smallest centroid-graph beam; the beam is `max(p, min_beam)`.
    pub min_beam: usize,
    pub seed: u64,
    pub graph: GraphParams,
    pub partition: PartitionOptions,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            target_recall: 0.9,
            k: 5,
            cost_ratio: 2.0,
            floor: 0.001,
            resolution: 1.25,
            min_beam: 32,
            seed: 0,
            graph: GraphParams::default(),
            partition: PartitionOptions::default(),
        }
    }
}

/// Density used when the search finds too few affordable probes.
pub const FALLBACK_DENSITY: f64 = 0.1;

impl ProfileConfig {
    fn validate(&self) -> Result<()> {
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(Error::usage(format!("target recall must be in (0, 1], got {}", self.target_recall)));
        }
        if self.k == 0 {
            return Err(Error::usage("k must be positive"));
        }
        if !(self.cost_ratio > 1.0) {
            return Err(Error::usage(format!("cost ratio must exceed 1, got {}", self.cost_ratio)));
        }
        if !(self.floor > 0.0 && self.floor < 1.0) || !(self.resolution > 1.0) {
            return Err(Error::usage("floor must be in (0, 1) and resolution > 1"));
        }
        Ok(())
    }
}

/// A partitioned sample with a graph over its centroids.
struct Layout {
    clusters: ClusteringResult,
    graph: ProximityGraph,
}

impl Layout {
    /// Recall and mean cost when each query scans its `p` nearest partitions.
    fn evaluate(&self, queries: &[DenseVector], truth: &GroundTruth, k: usize, p: usize, min_beam: usize) -> Result<(f64, f64)> {
        let metric = self.graph.metric();
        let rows: Vec<(f64, u64)> = queries
            .par_iter()
            .enumerate()
            .map(|(i, q)| {
                let q = q.as_slice();
                let (cents, stats) = graph_search(&self.graph, q, p, p.max(min_beam))?;
                let mut cost = stats.distance_computations;
                let mut top = TopK::new(k);
                for c in &cents {
                    let part = &self.clusters.partitions[c.id.index() as usize];
                    if part.len() == 1 {
                        // the centroid is the member; its distance is already known
                        top.push(part.members.id(0), c.distance);
                        continue;
                    }
                    cost += part.len() as u64;
                    for (id, v) in part.members.iter() {
                        top.push(id, metric.distance(q, v));
                    }
                }
                let ids: Vec<VectorId> = top.into_sorted().iter().map(|c| c.id).collect();
                Ok((recall_at_k(&ids, &truth.ids(i), k)?, cost))
            })
            .collect::<Result<_>>()?;
        let n = rows.len() as f64;
        Ok((rows.iter().map(|r| r.0).sum::<f64>() / n, rows.iter().map(|r| r.1 as f64).sum::<f64>() / n))
    }
}

/// Cost of reaching `cfg.target_recall` at recall@`cfg.k` on `sample` when
/// partitioned at `density` (no replication).
///
/// The probe count is found by doubling from 1 and then binary search, so the
/// count one below the result is known to miss the target.
pub fn measure_cost_at_density(
    sample: &Dataset,
    density: PartitionDensity,
    queries: &[DenseVector],
    truth: &GroundTruth,
    cfg: &ProfileConfig,
) -> Result<DensityProbe> {
    cfg.validate()?;
    if queries.is_empty() || truth.len() < queries.len() {
        return Err(Error::usage("need at least one query and ground truth for each"));
    }
    if truth.depth() < cfg.k || sample.len() < cfg.k {
        return Err(Error::usage(format!("ground truth and sample must cover k = {}", cfg.k)));
    }
    let clusters = partition_at_density(sample.vectors(), density, sample.metric, cfg.seed, &cfg.partition)?;
    let graph = build_graph(&clusters.centroids, sample.metric, &GraphParams { seed: cfg.seed, ..cfg.graph })?;
    let layout = Layout { clusters, graph };
    let parts = layout.clusters.partitions.len();
    let eval = |p: usize| layout.evaluate(queries, truth, cfg.k, p, cfg.min_beam);

    let mut lo = 0usize;
    let mut best_recall = 0.0f64;
    let mut p = 1usize;
    let (mut hi, mut hit) = loop {
        let (recall, cost) = eval(p)?;
        if recall >= cfg.target_recall {
            break (p, (recall, cost));
        }
        best_recall = best_recall.max(recall);
        lo = p;
        if p == parts {
            return Err(Error::UnreachableTarget { target: cfg.target_recall, best_recall });
        }
        p = (p * 2).min(parts);
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let r = eval(mid)?;
        if r.0 >= cfg.target_recall {
            hi = mid;
            hit = r;
        } else {
            lo = mid;
        }
    }
    Ok(DensityProbe { density, accessed_vectors: hit.1, probe_count: hi, recall: hit.0 })
}

/// Profile `sample` and pick the balanced density.
pub fn select_balanced_density(
    sample: &Dataset,
    queries: &[DenseVector],
    truth: &GroundTruth,
    cfg: &ProfileConfig,
) -> Result<DensityProfile> {
    select_with(cfg, |d| measure_cost_at_density(sample, PartitionDensity::new(d)?, queries, truth, cfg))
}

/// Selection rule over an arbitrary cost measurement.
///
/// Probes 1.0 (the baseline) and the floor. If the floor is affordable it is
/// chosen; otherwise log-density is bisected between the floor and 1.0 until
/// the bracket ratio is within `cfg.resolution`. The coarsest affordable probe
/// wins, unless fewer than three probes were affordable, in which case
/// [`FALLBACK_DENSITY`] is measured and chosen.
pub fn select_with(cfg: &ProfileConfig, mut measure: impl FnMut(f64) -> Result<DensityProbe>) -> Result<DensityProfile> {
    cfg.validate()?;
    let baseline = measure(1.0)?;
    let budget = cfg.cost_ratio * baseline.accessed_vectors;
    let affordable = |p: &DensityProbe| p.accessed_vectors <= budget;
    let mut probes = vec![baseline];

    let floor = measure(cfg.floor)?;
    probes.push(floor);
    let mut fell_back = false;
    let chosen = if affordable(&floor) {
        floor.density
    } else {
        let (mut lo, mut hi) = (cfg.floor, 1.0f64);
        while hi / lo > cfg.resolution {
            let mid = (lo * hi).sqrt();
            let p = measure(mid)?;
            probes.push(p);
            if affordable(&p) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let ok: Vec<&DensityProbe> = probes.iter().filter(|p| affordable(p)).collect();
        if ok.len() < 3 {
            fell_back = true;
            match probes.iter().find(|p| p.density.value() == FALLBACK_DENSITY) {
                Some(p) => p.density,
                None => {
                    let p = measure(FALLBACK_DENSITY)?;
                    probes.push(p);
                    p.density
                }
            }
        } else {
            ok.iter().map(|p| p.density).fold(baseline.density, |a, b| if b < a { b } else { a })
        }
    };
    probes.sort_by(|a, b| b.density.value().total_cmp(&a.density.value()));
    Ok(DensityProfile { probes, baseline_cost: baseline.accessed_vectors, chosen, fell_back })
}
