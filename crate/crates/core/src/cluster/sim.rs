use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{ClusterModel, Placement};
use crate::error::{Error, Result};
use crate::hierarchy::search::{request_bytes, response_bytes};
use crate::hierarchy::{search, HierarchicalIndex};
use crate::types::{Candidate, DenseVector, SearchParams, VectorId};

/// Assign every pid of `index` to one of `node_count` nodes.
pub fn place(index: &HierarchicalIndex, node_count: usize) -> Result<Placement> {
    Placement::new(node_count, index.pids())
}

/// What one node does for one level of one query.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NodeWork {
    pub node: usize,
    pub partitions_read: u64,
    pub bytes_read: u64,
    pub distance_computations: u64,
    pub request_bytes: u64,
    pub response_bytes: u64,
}

impl NodeWork {
    /// Service time on the node, without queueing.
    pub fn time_us(&self, model: &ClusterModel) -> f64 {
        1e6 * (self.partitions_read as f64 / model.disk_iops + self.distance_computations as f64 / model.cpu_rate)
            + model.disk_read_latency_us
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelCost {
    pub level: usize,
    pub nodes: Vec<NodeWork>,
    /// `rtt + max over involved nodes of node time`.
    pub time_us: f64,
}

/// Per-node totals over one or more queries.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NodeCounters {
    pub partitions_read: u64,
    pub bytes_read: u64,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub distance_computations: u64,
}

impl NodeCounters {
    fn add_work(&mut self, w: &NodeWork) {
        self.partitions_read += w.partitions_read;
        self.bytes_read += w.bytes_read;
        self.bytes_sent += w.response_bytes;
        self.bytes_received += w.request_bytes;
        self.distance_computations += w.distance_computations;
    }

    pub fn add(&mut self, o: &NodeCounters) {
        self.partitions_read += o.partitions_read;
        self.bytes_read += o.bytes_read;
        self.bytes_sent += o.bytes_sent;
        self.bytes_received += o.bytes_received;
        self.distance_computations += o.distance_computations;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryCostReport {
    pub results: Vec<Candidate>,
    pub root_distance_computations: u64,
    pub root_compute_us: f64,
    pub levels: Vec<LevelCost>,
    pub total_latency_us: f64,
    pub per_node: Vec<NodeCounters>,
}

/// Replay one query against the deployment model. The answer is exactly
/// what [`search`] returns; only costs are added.
pub fn simulate_query(
    index: &HierarchicalIndex,
    placement: &Placement,
    model: &ClusterModel,
    q: &[f32],
    params: &SearchParams,
) -> Result<QueryCostReport> {
    model.validate()?;
    if placement.node_count() != model.node_count {
        return Err(Error::usage(format!(
            "placement has {} nodes, model has {}",
            placement.node_count(),
            model.node_count
        )));
    }
    let (results, trace) = search(index, q, params)?;
    let root_compute_us = 1e6 * trace.root.distance_computations as f64 / model.cpu_rate;
    let mut per_node = vec![NodeCounters::default(); model.node_count];
    let mut levels = Vec::with_capacity(trace.levels.len());
    for lt in &trace.levels {
        let mut nodes = Vec::new();
        for (node, pids) in placement.group(&lt.pids) {
            let mut work = NodeWork { node, ..Default::default() };
            let mut unique: BTreeSet<VectorId> = BTreeSet::new();
            for &pid in &pids {
                let part = index.partition(lt.level, pid)?;
                work.partitions_read += 1;
                work.bytes_read += part.encoded_len() as u64;
                work.distance_computations += part.len() as u64;
                unique.extend(part.members.ids().iter().copied());
            }
            work.request_bytes = request_bytes(index.dim(), pids.len()) as u64;
            work.response_bytes = response_bytes(unique.len().min(params.m)) as u64;
            per_node[node].add_work(&work);
            nodes.push(work);
        }
        let slowest = nodes.iter().map(|w| w.time_us(model)).fold(0.0, f64::max);
        levels.push(LevelCost { level: lt.level, nodes, time_us: model.rtt_us + slowest });
    }
    let total_latency_us = root_compute_us + levels.iter().map(|l| l.time_us).sum::<f64>();
    Ok(QueryCostReport {
        results,
        root_distance_computations: trace.root.distance_computations,
        root_compute_us,
        levels,
        total_latency_us,
        per_node,
    })
}

pub fn simulate_workload(
    index: &HierarchicalIndex,
    placement: &Placement,
    model: &ClusterModel,
    queries: &[DenseVector],
    params: &SearchParams,
) -> Result<Vec<QueryCostReport>> {
    queries
        .par_iter()
        .map(|q| simulate_query(index, placement, model, q.as_slice(), params))
        .collect()
}

/// Max over mean of per-node loads. All-zero loads count as balanced.
pub fn measure_beta(loads: &[u64]) -> Result<f64> {
    if loads.is_empty() {
        return Err(Error::usage("need at least one node load"));
    }
    let total: u64 = loads.iter().sum();
    if total == 0 {
        return Ok(1.0);
    }
    let mean = total as f64 / loads.len() as f64;
    Ok(*loads.iter().max().unwrap() as f64 / mean)
}

/// Partitions fetched per node, summed over `reports`.
pub fn node_loads(reports: &[QueryCostReport]) -> Vec<u64> {
    let nodes = reports.first().map_or(0, |r| r.per_node.len());
    let mut loads = vec![0u64; nodes];
    for r in reports {
        for (l, c) in loads.iter_mut().zip(&r.per_node) {
            *l += c.partitions_read;
        }
    }
    loads
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Resource {
    DiskIops,
    DiskBandwidth,
    Network,
    Cpu,
}

impl Resource {
    pub const ALL: [Resource; 4] = [Resource::DiskIops, Resource::DiskBandwidth, Resource::Network, Resource::Cpu];

    pub fn as_str(self) -> &'static str {
        match self {
            Resource::DiskIops => "disk_iops",
            Resource::DiskBandwidth => "disk_bandwidth",
            Resource::Network => "network",
            Resource::Cpu => "cpu",
        }
    }

    /// Per-node capacity in this resource's units per second.
    pub fn capacity(self, model: &ClusterModel) -> f64 {
        match self {
            Resource::DiskIops => model.disk_iops,
            Resource::DiskBandwidth => model.disk_bandwidth,
            Resource::Network => model.net_bandwidth,
            Resource::Cpu => model.cpu_rate,
        }
    }
}

/// Mean cluster-wide demand of one query.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Demand {
    pub reads: f64,
    pub disk_bytes: f64,
    pub net_bytes: f64,
    /// Store-side scans plus the root graph search.
    pub cpu_ops: f64,
}

impl Demand {
    pub fn of(self, r: Resource) -> f64 {
        match r {
            Resource::DiskIops => self.reads,
            Resource::DiskBandwidth => self.disk_bytes,
            Resource::Network => self.net_bytes,
            Resource::Cpu => self.cpu_ops,
        }
    }

    pub fn mean(reports: &[QueryCostReport]) -> Demand {
        let n = reports.len().max(1) as f64;
        let mut d = Demand::default();
        for r in reports {
            for c in &r.per_node {
                d.reads += c.partitions_read as f64;
                d.disk_bytes += c.bytes_read as f64;
                d.net_bytes += (c.bytes_sent + c.bytes_received) as f64;
                d.cpu_ops += c.distance_computations as f64;
            }
            d.cpu_ops += r.root_distance_computations as f64;
        }
        Demand { reads: d.reads / n, disk_bytes: d.disk_bytes / n, net_bytes: d.net_bytes / n, cpu_ops: d.cpu_ops / n }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputEstimate {
    pub qps: f64,
    pub binding: Resource,
    /// Hottest-node utilization of each resource at `qps`; the binding one is 1.
    pub utilization: Vec<(Resource, f64)>,
    pub demand: Demand,
    pub mean_latency_us: f64,
    pub p99_latency_us: f64,
}

impl ThroughputEstimate {
    pub fn utilization_of(&self, r: Resource) -> f64 {
        self.utilization.iter().find(|u| u.0 == r).map_or(0.0, |u| u.1)
    }
}

/// Capacity bound: `min over r of node_count·capacity_r / (beta·demand_r)`.
pub fn throughput_from_demand(demand: &Demand, model: &ClusterModel) -> Result<(f64, Resource, Vec<(Resource, f64)>)> {
    model.validate()?;
    let per_resource: Vec<(Resource, f64)> = Resource::ALL
        .iter()
        .map(|&r| {
            let d = demand.of(r);
            let qps = if d > 0.0 { model.node_count as f64 * r.capacity(model) / (model.beta * d) } else { f64::INFINITY };
            (r, qps)
        })
        .collect();
    let (binding, qps) = per_resource
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    if !qps.is_finite() {
        return Err(Error::usage("workload has no finite resource demand"));
    }
    let utilization = per_resource.iter().map(|&(r, cap)| (r, qps / cap)).collect();
    Ok((qps, binding, utilization))
}

/// Peak QPS of `model` for the given workload.
pub fn estimate_throughput(
    index: &HierarchicalIndex,
    placement: &Placement,
    model: &ClusterModel,
    workload: &[DenseVector],
    params: &SearchParams,
) -> Result<ThroughputEstimate> {
    if workload.is_empty() {
        return Err(Error::usage("workload must contain at least one query"));
    }
    let reports = simulate_workload(index, placement, model, workload, params)?;
    estimate_from_reports(&reports, model)
}

pub fn estimate_from_reports(reports: &[QueryCostReport], model: &ClusterModel) -> Result<ThroughputEstimate> {
    let demand = Demand::mean(reports);
    let (qps, binding, utilization) = throughput_from_demand(&demand, model)?;
    let mut lat: Vec<f64> = reports.iter().map(|r| r.total_latency_us).collect();
    lat.sort_by(f64::total_cmp);
    let p99 = lat[((lat.len() as f64 * 0.99).ceil() as usize).clamp(1, lat.len()) - 1];
    Ok(ThroughputEstimate {
        qps,
        binding,
        utilization,
        demand,
        mean_latency_us: lat.iter().sum::<f64>() / lat.len() as f64,
        p99_latency_us: p99,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic;
    use crate::hierarchy::{build_levels, BuildConfig};

    fn index() -> (HierarchicalIndex, Vec<DenseVector>) {
        let ds = generate_synthetic(4000, 8, 16, 0.1, 1).unwrap();
        let idx = build_levels(&ds, &BuildConfig::fixed(40, 0.1).unwrap()).unwrap();
        let queries = generate_synthetic(30, 8, 16, 0.1, 9).unwrap().to_dense();
        (idx, queries)
    }

    #[test]
    fn ideal_model_has_zero_latency_and_same_answers() {
        let (idx, queries) = index();
        let model = ClusterModel::ideal(3);
        let placement = place(&idx, 3).unwrap();
        let params = SearchParams::new(16, 10);
        for q in &queries {
            let r = simulate_query(&idx, &placement, &model, q.as_slice(), &params).unwrap();
            assert_eq!(r.total_latency_us, 0.0);
            assert_eq!(r.results, search(&idx, q.as_slice(), &params).unwrap().0);
            assert_eq!(r.levels.len(), 2);
            for l in &r.levels {
                assert!(l.nodes.len() <= 3.min(params.m));
            }
        }
    }

    #[test]
    fn latency_breakdown_adds_up() {
        let (idx, queries) = index();
        let model = ClusterModel::lsv3_like(4);
        let placement = place(&idx, 4).unwrap();
        let params = SearchParams::new(32, 10);
        let r = simulate_query(&idx, &placement, &model, queries[0].as_slice(), &params).unwrap();
        let mut total = r.root_compute_us;
        for l in &r.levels {
            let slowest = l.nodes.iter().map(|w| w.time_us(&model)).fold(0.0, f64::max);
            assert_eq!(l.time_us, model.rtt_us + slowest);
            total += l.time_us;
            for w in &l.nodes {
                assert!(w.response_bytes as usize <= 5 + 4 + 12 * params.m);
            }
        }
        assert_eq!(r.total_latency_us, total);
        assert!(r.total_latency_us >= 2.0 * model.rtt_us);
    }

    #[test]
    fn throughput_scales_with_nodes_and_beta() {
        let demand = Demand { reads: 500.0, disk_bytes: 2e5, net_bytes: 4e4, cpu_ops: 1e4 };
        let m5 = ClusterModel::lsv3_like(5);
        let (q5, b5, u5) = throughput_from_demand(&demand, &m5).unwrap();
        let (q10, _, _) = throughput_from_demand(&demand, &m5.with_nodes(10)).unwrap();
        let (qb, _, _) = throughput_from_demand(&demand, &m5.with_beta(1.2)).unwrap();
        assert!((q10 / q5 - 2.0).abs() < 1e-12);
        assert!((qb * 1.2 / q5 - 1.0).abs() < 1e-12);
        assert_eq!(b5, Resource::DiskIops);
        assert!(u5.iter().all(|&(_, u)| u <= 1.0 + 1e-12));
    }

    #[test]
    fn beta_examples() {
        assert_eq!(measure_beta(&[5, 5, 5]).unwrap(), 1.0);
        assert_eq!(measure_beta(&[0, 9, 0]).unwrap(), 3.0);
        assert_eq!(measure_beta(&[0, 0]).unwrap(), 1.0);
        assert!(measure_beta(&[]).is_err());
    }
}
