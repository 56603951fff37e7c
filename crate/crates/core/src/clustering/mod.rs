//! Density-controlled partitioning of one index level.
//!
//! A level with `n` vectors clustered at density `D` yields exactly
//! `max(1, round(D·n))` partitions. Large levels are first split into shards
//! of bounded size by a coarse k-means, and each shard is clustered on its
//! own with a share of the partition budget proportional to its size, so the
//! work stays near `n · (n/shards) · D` instead of `n² · D`.

mod format;
pub mod kmeans;

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use format::{read_partitions, write_partitions};
pub use kmeans::{kmeans, KMeans};

use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphParams};
use crate::types::{DistanceMetric, VectorId, VectorSet};

/// Members grouped under their parent centroid's id.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub pid: VectorId,
    pub members: VectorSet,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Bytes this partition occupies in the partition file format.
    pub fn encoded_len(&self) -> usize {
        12 + self.members.len() * (8 + 4 * self.members.dim())
    }
}

/// Partitions per vector, in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PartitionDensity(f64);

impl PartitionDensity {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value <= 1.0) {
            return Err(Error::usage(format!("density must be in (0, 1], got {value}")));
        }
        Ok(PartitionDensity(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `max(1, round(D·n))`.
    pub fn partition_count(self, n: usize) -> usize {
        ((self.0 * n as f64).round() as usize).clamp(1, n.max(1))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringResult {
    /// Parent-level vectors; row `j` is the centroid of `partitions[j]`.
    pub centroids: VectorSet,
    pub partitions: Vec<Partition>,
    /// Average number of partitions each input vector appears in.
    pub replication_factor: f64,
}

impl ClusteringResult {
    pub fn member_count(&self) -> usize {
        self.partitions.iter().map(Partition::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionOptions {
    pub max_iters: usize,
    /// Upper bound on the rows clustered together in one local k-means.
    pub shard_size: usize,
    /// Children per coarse split when sharding.
    pub fanout: usize,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions { max_iters: 20, shard_size: 4096, fanout: 16 }
    }
}

/// Below this many `rows × clusters`, one global k-means is cheap enough.
const DIRECT_WORK: usize = 20_000_000;
/// Local clusters to aim for per shard.
const CLUSTERS_PER_SHARD: f64 = 32.0;

/// Cluster `vectors` into `max(1, round(D·n))` partitions. Each centroid is
/// its members' mean and gets a fresh id one level above the input.
pub fn partition_at_density(
    vectors: &VectorSet,
    density: PartitionDensity,
    metric: DistanceMetric,
    seed: u64,
    opts: &PartitionOptions,
) -> Result<ClusteringResult> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::usage("cannot partition an empty vector set"));
    }
    let level = vectors.id(0).level();
    if vectors.ids().iter().any(|id| id.level() != level) {
        return Err(Error::usage("input vectors span more than one level"));
    }
    let parent = level.checked_add(1).ok_or_else(|| Error::usage("level overflow"))?;
    let k = density.partition_count(n);
    let dim = vectors.dim();

    let shard_size = opts.shard_size.max((CLUSTERS_PER_SHARD / density.value()).ceil() as usize);
    let groups: Vec<(Vec<usize>, usize)> = if n <= shard_size || n.saturating_mul(k) <= DIRECT_WORK {
        vec![((0..n).collect(), k)]
    } else {
        let shards = split_shards(vectors, metric, seed, shard_size, opts.fanout.max(2));
        let sizes: Vec<usize> = shards.iter().map(Vec::len).collect();
        if shards.len() > k {
            vec![((0..n).collect(), k)]
        } else {
            let quotas = allocate(k, &sizes);
            shards.into_iter().zip(quotas).collect()
        }
    };

    let locals: Vec<KMeans> = groups
        .par_iter()
        .enumerate()
        .map(|(s, (rows, ks))| {
            let local = vectors.select(rows);
            kmeans::kmeans_rows(local.data(), dim, *ks, metric, seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15), opts.max_iters)
        })
        .collect();

    let mut centroids = VectorSet::with_capacity(dim, k);
    let mut partitions = Vec::with_capacity(k);
    for ((rows, ks), km) in groups.iter().zip(&locals) {
        let base = partitions.len();
        for c in 0..*ks {
            let pid = VectorId::new(parent, (base + c) as u64);
            centroids.push(pid, km.centroid(c));
            partitions.push(Partition { pid, members: VectorSet::new(dim) });
        }
        for (&row, &c) in rows.iter().zip(&km.assignment) {
            partitions[base + c as usize].members.push(vectors.id(row), vectors.row(row));
        }
    }
    debug_assert_eq!(partitions.len(), k);
    Ok(ClusteringResult { centroids, partitions, replication_factor: 1.0 })
}

/// Recursive coarse k-means until every shard holds at most `max_size` rows.
fn split_shards(vectors: &VectorSet, metric: DistanceMetric, seed: u64, max_size: usize, fanout: usize) -> Vec<Vec<usize>> {
    let dim = vectors.dim();
    let mut out = Vec::new();
    let mut stack = vec![(0..vectors.len()).collect::<Vec<usize>>()];
    let mut round = 0u64;
    while let Some(rows) = stack.pop() {
        if rows.len() <= max_size {
            out.push(rows);
            continue;
        }
        round += 1;
        let f = fanout.min(rows.len().div_ceil(max_size)).max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(round));
        let train_n = rows.len().min(f * 256);
        let mut train: Vec<usize> = index::sample(&mut rng, rows.len(), train_n).into_iter().map(|i| rows[i]).collect();
        train.sort_unstable();
        let km = kmeans::kmeans_rows(vectors.select(&train).data(), dim, f, metric, seed.wrapping_add(round), 10);
        let labels: Vec<usize> = rows
            .par_iter()
            .map(|&r| kmeans::nearest(vectors.row(r), &km.centroids, dim, metric).0)
            .collect();
        let mut children = vec![Vec::new(); f];
        for (&r, &l) in rows.iter().zip(&labels) {
            children[l].push(r);
        }
        if children.iter().any(|c| c.len() == rows.len()) {
            // coincident points: fall back to even chunks
            let chunk = rows.len().div_ceil(f);
            children = rows.chunks(chunk).map(<[usize]>::to_vec).collect();
        }
        // reversed so shards come out in child order
        stack.extend(children.into_iter().filter(|c| !c.is_empty()).rev());
    }
    out
}

/// Split `k` across shards proportionally (largest remainder), at least one
/// and at most `size` per shard, summing to exactly `k`.
fn allocate(k: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let ideal: Vec<f64> = sizes.iter().map(|&s| k as f64 * s as f64 / n as f64).collect();
    let mut quota: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
    let mut missing = k - quota.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if quota[i] < sizes[i] {
            quota[i] += 1;
            missing -= 1;
        }
    }
    for (q, &s) in quota.iter_mut().zip(sizes) {
        *q = (*q).clamp(1, s);
    }
    let mut excess = quota.iter().sum::<usize>() as isize - k as isize;
    while excess > 0 {
        let i = (0..quota.len())
            .filter(|&i| quota[i] > 1)
            .max_by_key(|&i| (quota[i], std::cmp::Reverse(i)))
            .expect("k >= shard count");
        quota[i] -= 1;
        excess -= 1;
    }
    quota
}

/// Copy each vector into every partition whose centroid is within
/// `(1+epsilon)` of its nearest centroid distance, keeping at most
/// `max_copies` copies in total, nearest first.
///
/// With more than [`EXHAUSTIVE_CENTROIDS`] centroids, only the vector's own
/// centroid and that centroid's proximity-graph neighbors are considered.
/// For metrics that can go negative the threshold is `d + epsilon·|d|`.
pub fn replicate_boundary(
    result: &ClusteringResult,
    epsilon: f64,
    max_copies: usize,
    metric: DistanceMetric,
) -> Result<ClusteringResult> {
    if !(epsilon >= 0.0) || max_copies == 0 {
        return Err(Error::usage("epsilon must be >= 0 and max_copies >= 1"));
    }
    let k = result.partitions.len();
    let cents = &result.centroids;
    let neighbors: Option<Vec<Vec<u32>>> = if k > EXHAUSTIVE_CENTROIDS {
        let g = build_graph(cents, metric, &GraphParams { max_degree: 32, build_beam: 64, seed: 0 })?;
        Some((0..k).map(|i| g.neighbors(i).to_vec()).collect())
    } else {
        None
    };

    // (member row, destination partition) per source partition
    let extra: Vec<Vec<(usize, usize)>> = result
        .partitions
        .par_iter()
        .enumerate()
        .map(|(own, part)| {
            let cand: Vec<usize> = match &neighbors {
                Some(nb) => std::iter::once(own).chain(nb[own].iter().map(|&j| j as usize)).collect(),
                None => (0..k).collect(),
            };
            let mut out = Vec::new();
            let mut scored: Vec<(f32, usize)> = Vec::with_capacity(cand.len());
            for (row, (_, v)) in part.members.iter().enumerate() {
                scored.clear();
                scored.extend(cand.iter().map(|&j| (metric.distance(v, cents.row(j)), j)));
                let nearest = scored.iter().map(|s| s.0).fold(f32::INFINITY, f32::min) as f64;
                let limit = nearest + epsilon * nearest.abs();
                scored.retain(|&(d, j)| j != own && d as f64 <= limit);
                scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(result.partitions[a.1].pid.cmp(&result.partitions[b.1].pid)));
                out.extend(scored.iter().take(max_copies - 1).map(|&(_, j)| (row, j)));
            }
            out
        })
        .collect();

    let mut partitions = result.partitions.clone();
    let unique: usize = partitions.iter().map(Partition::len).sum();
    for (src, copies) in extra.iter().enumerate() {
        let members = &result.partitions[src].members;
        for &(row, dst) in copies {
            partitions[dst].members.push(members.id(row), members.row(row));
        }
    }
    let total: usize = partitions.iter().map(Partition::len).sum();
    Ok(ClusteringResult {
        centroids: result.centroids.clone(),
        partitions,
        replication_factor: result.replication_factor * total as f64 / unique.max(1) as f64,
    })
}

/// Centroid count up to which boundary replication compares every centroid.
pub const EXHAUSTIVE_CENTROIDS: usize = 1024;

/// Merge partitions that share a pid (de-duplicating members by id, first
/// copy wins) and deal each one to `hash(pid) mod node_count`.
/// Element `i` of the result holds node `i`'s partitions in ascending pid order.
pub fn shuffle_partitions(
    partitions: Vec<Partition>,
    node_count: usize,
    hash: impl Fn(VectorId) -> u64,
) -> Result<Vec<Vec<Partition>>> {
    if node_count == 0 {
        return Err(Error::usage("node count must be at least 1"));
    }
    let mut merged: BTreeMap<VectorId, Partition> = BTreeMap::new();
    for p in partitions {
        match merged.get_mut(&p.pid) {
            None => {
                merged.insert(p.pid, p);
            }
            Some(existing) => {
                if existing.members.dim() != p.members.dim() {
                    return Err(Error::usage(format!("partition {} has mixed dimensions", p.pid)));
                }
                for (id, row) in p.members.iter() {
                    if !existing.members.ids().contains(&id) {
                        existing.members.push(id, row);
                    }
                }
            }
        }
    }
    let mut nodes = vec![Vec::new(); node_count];
    for (pid, mut p) in merged {
        dedup_members(&mut p);
        nodes[(hash(pid) % node_count as u64) as usize].push(p);
    }
    Ok(nodes)
}

fn dedup_members(p: &mut Partition) {
    let mut seen = std::collections::HashSet::new();
    if p.members.ids().iter().all(|id| seen.insert(*id)) {
        return;
    }
    seen.clear();
    let keep: Vec<usize> = (0..p.members.len()).filter(|&i| seen.insert(p.members.id(i))).collect();
    p.members = p.members.select(&keep);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::placement_hash;
    use crate::dataset::generate_synthetic;
    use std::collections::BTreeSet;

    fn level0(dim: usize, data: Vec<f32>) -> VectorSet {
        let n = data.len() / dim;
        VectorSet::from_parts(dim, (0..n as u64).map(|i| VectorId::new(0, i)).collect(), data).unwrap()
    }

    fn ids_of(r: &ClusteringResult) -> BTreeSet<VectorId> {
        r.partitions.iter().flat_map(|p| p.members.ids().to_vec()).collect()
    }

    #[test]
    fn density_validation_and_count() {
        assert!(PartitionDensity::new(0.0).is_err());
        assert!(PartitionDensity::new(1.5).is_err());
        let d = PartitionDensity::new(0.1).unwrap();
        assert_eq!(d.partition_count(100_000), 10_000);
        assert_eq!(d.partition_count(4), 1);
        assert_eq!(PartitionDensity::new(0.001).unwrap().partition_count(10), 1);
    }

    #[test]
    fn density_one_gives_singletons() {
        let ds = generate_synthetic(200, 4, 3, 0.1, 1).unwrap();
        let r = partition_at_density(ds.vectors(), PartitionDensity::new(1.0).unwrap(), DistanceMetric::SquaredL2, 3, &Default::default()).unwrap();
        assert_eq!(r.partitions.len(), 200);
        for (j, p) in r.partitions.iter().enumerate() {
            assert_eq!(p.len(), 1);
            assert_eq!(p.members.row(0), r.centroids.row(j));
            assert_eq!(p.pid.level(), 1);
        }
    }

    #[test]
    fn density_one_over_n_gives_one_partition() {
        let ds = generate_synthetic(300, 3, 5, 0.2, 2).unwrap();
        let r = partition_at_density(ds.vectors(), PartitionDensity::new(1.0 / 300.0).unwrap(), DistanceMetric::SquaredL2, 3, &Default::default()).unwrap();
        assert_eq!(r.partitions.len(), 1);
        assert_eq!(r.partitions[0].len(), 300);
    }

    #[test]
    fn centroid_is_member_mean() {
        let ds = generate_synthetic(500, 3, 4, 0.1, 3).unwrap();
        let r = partition_at_density(ds.vectors(), PartitionDensity::new(0.05).unwrap(), DistanceMetric::SquaredL2, 1, &Default::default()).unwrap();
        for (j, p) in r.partitions.iter().enumerate() {
            for d in 0..3 {
                let mean: f64 = p.members.iter().map(|(_, v)| v[d] as f64).sum::<f64>() / p.len() as f64;
                assert!((mean as f32 - r.centroids.row(j)[d]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn sharded_path_keeps_exact_count_and_coverage() {
        let ds = generate_synthetic(20_000, 8, 20, 0.05, 4).unwrap();
        let opts = PartitionOptions { shard_size: 1000, ..Default::default() };
        let d = PartitionDensity::new(0.1).unwrap();
        let r = partition_at_density(ds.vectors(), d, DistanceMetric::SquaredL2, 9, &opts).unwrap();
        assert_eq!(r.partitions.len(), 2000);
        assert_eq!(ids_of(&r).len(), 20_000);
        assert_eq!(r.member_count(), 20_000);
        assert!(r.partitions.iter().all(|p| !p.is_empty()));
        let again = partition_at_density(ds.vectors(), d, DistanceMetric::SquaredL2, 9, &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn allocation_sums_exactly() {
        assert_eq!(allocate(10, &[5, 5, 5]).iter().sum::<usize>(), 10);
        assert_eq!(allocate(3, &[100, 1, 1]), vec![1, 1, 1]);
        assert_eq!(allocate(4, &[100, 1, 1]), vec![2, 1, 1]);
        let q = allocate(7, &[10, 1, 1, 1, 1]);
        assert_eq!(q.iter().sum::<usize>(), 7);
        assert!(q.iter().all(|&x| x >= 1));
    }

    #[test]
    fn no_replication_without_ties() {
        let s = level0(1, vec![0., 1., 10., 11.]);
        let r = partition_at_density(&s, PartitionDensity::new(0.5).unwrap(), DistanceMetric::SquaredL2, 1, &Default::default()).unwrap();
        let rep = replicate_boundary(&r, 0.0, 8, DistanceMetric::SquaredL2).unwrap();
        assert_eq!(rep.member_count(), 4);
        assert_eq!(rep.replication_factor, 1.0);
    }

    #[test]
    fn equidistant_vector_gets_two_copies() {
        let dim = 1;
        let centroids = VectorSet::from_parts(dim, vec![VectorId::new(1, 0), VectorId::new(1, 1)], vec![0.0, 2.0]).unwrap();
        let mut a = VectorSet::new(dim);
        a.push(VectorId(0), &[0.0]);
        a.push(VectorId(1), &[1.0]);
        let mut b = VectorSet::new(dim);
        b.push(VectorId(2), &[2.0]);
        let r = ClusteringResult {
            centroids,
            partitions: vec![Partition { pid: VectorId::new(1, 0), members: a }, Partition { pid: VectorId::new(1, 1), members: b }],
            replication_factor: 1.0,
        };
        let rep = replicate_boundary(&r, 0.0, 8, DistanceMetric::SquaredL2).unwrap();
        assert_eq!(rep.partitions[1].members.ids(), &[VectorId(2), VectorId(1)]);
        assert_eq!(rep.member_count(), 4);
        assert!((rep.replication_factor - 4.0 / 3.0).abs() < 1e-12);
        let capped = replicate_boundary(&r, 0.0, 1, DistanceMetric::SquaredL2).unwrap();
        assert_eq!(capped.member_count(), 3);
    }

    #[test]
    fn replication_respects_cap_and_keeps_coverage() {
        let ds = generate_synthetic(3000, 8, 10, 0.2, 5).unwrap();
        let r = partition_at_density(ds.vectors(), PartitionDensity::new(0.05).unwrap(), DistanceMetric::SquaredL2, 2, &Default::default()).unwrap();
        let rep = replicate_boundary(&r, 0.5, 3, DistanceMetric::SquaredL2).unwrap();
        assert_eq!(ids_of(&rep), ids_of(&r));
        let mut copies = std::collections::HashMap::new();
        for p in &rep.partitions {
            let unique: BTreeSet<_> = p.members.ids().iter().collect();
            assert_eq!(unique.len(), p.len());
            for id in p.members.ids() {
                *copies.entry(*id).or_insert(0) += 1;
            }
        }
        assert!(copies.values().all(|&c| (1..=3).contains(&c)));
        assert!(rep.replication_factor > 1.0);
    }

    #[test]
    fn shuffle_merges_shared_pids() {
        let pid = VectorId::new(1, 7);
        let mk = |ids: &[u64]| {
            let mut m = VectorSet::new(2);
            for &i in ids {
                m.push(VectorId(i), &[i as f32, 0.0]);
            }
            Partition { pid, members: m }
        };
        let nodes = shuffle_partitions(vec![mk(&[1, 2, 3]), mk(&[3, 4])], 1, placement_hash).unwrap();
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0].len(), 1);
        assert_eq!(nodes[0][0].members.ids(), &[VectorId(1), VectorId(2), VectorId(3), VectorId(4)]);
        assert!(shuffle_partitions(vec![], 0, placement_hash).is_err());
    }

    #[test]
    fn shuffle_balances_ten_thousand_partitions() {
        let parts: Vec<Partition> = (0..10_000u64)
            .map(|i| Partition { pid: VectorId::new(1, i), members: VectorSet::new(1) })
            .collect();
        let nodes = shuffle_partitions(parts, 5, placement_hash).unwrap();
        let loads: Vec<usize> = nodes.iter().map(Vec::len).collect();
        let max = *loads.iter().max().unwrap() as f64;
        assert!(max / 2000.0 <= 1.1, "{loads:?}");
    }
}
