//! Single-layer navigable proximity graph.
//!
//! Nodes are inserted one batch at a time in a seeded order. Each new node
//! searches the current graph, keeps up to `R` diverse neighbors (candidate
//! `c` is dropped when a kept neighbor `b` has `d(b, c) < d(q, c)`), and gets
//! reverse edges from them; a neighbor that overflows `R` is re-pruned. A
//! final pass links every node that is not reachable from the entry. With at
//! most `R + 1` nodes the graph is simply complete.
//!
//! Searches inside one batch run in parallel against the graph as it stood
//! when the batch started and are committed in insertion order, so the result
//! does not depend on the thread count.

mod format;
mod shard;

use std::cell::RefCell;
use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use format::{read_graph, write_graph};
pub use shard::{shard_and_measure, ShardProbe};

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::metrics::recall_at_k;
use crate::types::{Candidate, DenseVector, DistanceMetric, VectorId, VectorSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphParams {
    /// `R`: neighbor cap per node.
    pub max_degree: usize,
    pub build_beam: usize,
    pub seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams { max_degree: 32, build_beam: 128, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProximityGraph {
    nodes: VectorSet,
    metric: DistanceMetric,
    max_degree: usize,
    entry: u32,
    adjacency: Vec<Vec<u32>>,
}

/// Counters for one search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub distance_computations: u64,
    pub expansions: u64,
    /// Expansions landing on a different shard than the previous one. Zero
    /// unless the search ran with shard labels.
    pub cross_node_steps: u64,
}

impl TraversalStats {
    pub fn add(&mut self, other: &TraversalStats) {
        self.distance_computations += other.distance_computations;
        self.expansions += other.expansions;
        self.cross_node_steps += other.cross_node_steps;
    }
}

impl ProximityGraph {
    pub(crate) fn from_parts(
        nodes: VectorSet,
        metric: DistanceMetric,
        max_degree: usize,
        entry: u32,
        adjacency: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let n = nodes.len();
        if adjacency.len() != n || (n > 0 && entry as usize >= n) {
            return Err(Error::usage("adjacency does not match node table"));
        }
        for (i, nb) in adjacency.iter().enumerate() {
            if nb.len() > max_degree || nb.iter().any(|&j| j as usize >= n || j as usize == i) {
                return Err(Error::usage(format!("bad adjacency list for node {i}")));
            }
        }
        Ok(ProximityGraph { nodes, metric, max_degree, entry, adjacency })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.dim()
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Node index where every search starts.
    pub fn entry(&self) -> usize {
        self.entry as usize
    }

    pub fn nodes(&self) -> &VectorSet {
        &self.nodes
    }

    pub fn id(&self, i: usize) -> VectorId {
        self.nodes.id(i)
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Node indices reachable from the entry.
    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        if !self.is_empty() {
            bfs(&self.adjacency, self.entry as usize, &mut seen);
        }
        seen
    }

    #[inline]
    fn dist(&self, q: &[f32], i: u32) -> f32 {
        self.metric.distance(q, self.nodes.row(i as usize))
    }

    fn key(&self, d: f32, i: u32) -> Key {
        Key { distance: d, id: self.nodes.id(i as usize).0, node: i }
    }

    /// Best-first search; returns the final pool, ascending.
    fn search_pool(&self, q: &[f32], beam: usize, shards: Option<&[u32]>) -> (Vec<Key>, TraversalStats) {
        let mut stats = TraversalStats::default();
        if self.is_empty() || beam == 0 {
            return (Vec::new(), stats);
        }
        VISITED.with(|v| {
            let mut visited = v.borrow_mut();
            visited.reset(self.len());
            let start = self.key(self.dist(q, self.entry), self.entry);
            stats.distance_computations += 1;
            visited.insert(self.entry);
            let mut frontier = BinaryHeap::new();
            let mut pool = BinaryHeap::with_capacity(beam + 1);
            frontier.push(Reverse(start));
            pool.push(start);
            let mut last_shard = None;
            while let Some(Reverse(cur)) = frontier.pop() {
                if pool.len() >= beam && cur > *pool.peek().unwrap() {
                    break;
                }
                stats.expansions += 1;
                if let Some(labels) = shards {
                    let s = labels[cur.node as usize];
                    if last_shard.is_some_and(|p| p != s) {
                        stats.cross_node_steps += 1;
                    }
                    last_shard = Some(s);
                }
                for &nb in &self.adjacency[cur.node as usize] {
                    if !visited.insert(nb) {
                        continue;
                    }
                    stats.distance_computations += 1;
                    let k = self.key(self.dist(q, nb), nb);
                    if pool.len() < beam || k < *pool.peek().unwrap() {
                        frontier.push(Reverse(k));
                        pool.push(k);
                        if pool.len() > beam {
                            pool.pop();
                        }
                    }
                }
            }
            (pool.into_sorted_vec(), stats)
        })
    }
}

/// Search ordering: distance, then vector id.
#[derive(Clone, Copy, Debug)]
struct Key {
    distance: f32,
    id: u64,
    node: u32,
}

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }
}

/// Epoch-stamped visited set, reused across searches on one thread.
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn reset(&mut self, n: usize) {
        if self.marks.len() < n {
            self.marks.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// True if `i` was not yet visited.
    #[inline]
    fn insert(&mut self, i: u32) -> bool {
        let m = &mut self.marks[i as usize];
        if *m == self.epoch {
            false
        } else {
            *m = self.epoch;
            true
        }
    }
}

thread_local! {
    static VISITED: RefCell<Visited> = const { RefCell::new(Visited { marks: Vec::new(), epoch: 0 }) };
}

fn bfs(adjacency: &[Vec<u32>], from: usize, seen: &mut [bool]) {
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v as usize] {
                seen[v as usize] = true;
                queue.push_back(v as usize);
            }
        }
    }
}

/// Build a graph over `vectors`. Node `i` is row `i`.
pub fn build_graph(vectors: &VectorSet, metric: DistanceMetric, params: &GraphParams) -> Result<ProximityGraph> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::usage("cannot build a graph over zero vectors"));
    }
    if n > u32::MAX as usize {
        return Err(Error::usage("too many nodes for one graph"));
    }
    if params.max_degree < 2 || params.build_beam == 0 {
        return Err(Error::usage("max degree must be >= 2 and build beam >= 1"));
    }
    let r = params.max_degree;
    let entry = medoid(vectors, metric) as u32;
    let mut g = ProximityGraph { nodes: vectors.clone(), metric, max_degree: r, entry, adjacency: vec![Vec::new(); n] };

    if n <= r + 1 {
        // small enough to link every pair outright
        g.adjacency = (0..n as u32).map(|i| (0..n as u32).filter(|&j| j != i).collect()).collect();
        return Ok(g);
    }
    let mut order: Vec<u32> = (0..n as u32).filter(|&i| i != entry).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));

    let mut pos = 0;
    while pos < order.len() {
        let inserted = pos + 1;
        let batch = (inserted / 8).clamp(1, 256);
        let end = (pos + batch).min(order.len());
        let found: Vec<Vec<Key>> = order[pos..end]
            .par_iter()
            .map(|&u| g.search_pool(g.nodes.row(u as usize), params.build_beam, None).0)
            .collect();
        for (&u, cands) in order[pos..end].iter().zip(found) {
            let kept = prune(&g, u, &cands, r);
            for &v in &kept {
                add_edge(&mut g, v, u);
            }
            g.adjacency[u as usize] = kept;
        }
        pos = end;
    }
    repair_reachability(&mut g, params.build_beam);
    Ok(g)
}

/// Row closest to the mean; ties go to the lower index.
fn medoid(vectors: &VectorSet, metric: DistanceMetric) -> usize {
    let dim = vectors.dim();
    let mut mean = vec![0f64; dim];
    for (_, row) in vectors.iter() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    let mean: Vec<f32> = mean.iter().map(|m| (m / vectors.len() as f64) as f32).collect();
    let mut best = (0, f32::INFINITY);
    for (i, (_, row)) in vectors.iter().enumerate() {
        let d = metric.distance(row, &mean);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Diversity pruning over `cands` (ascending by distance to `u`).
fn prune(g: &ProximityGraph, u: u32, cands: &[Key], r: usize) -> Vec<u32> {
    let mut kept: Vec<u32> = Vec::with_capacity(r);
    for c in cands {
        if c.node == u {
            continue;
        }
        let crow = g.nodes.row(c.node as usize);
        if kept.iter().any(|&b| g.dist(crow, b) < c.distance) {
            continue;
        }
        kept.push(c.node);
        if kept.len() == r {
            break;
        }
    }
    kept
}

fn add_edge(g: &mut ProximityGraph, from: u32, to: u32) {
    let list = &g.adjacency[from as usize];
    if list.contains(&to) {
        return;
    }
    if list.len() < g.max_degree {
        g.adjacency[from as usize].push(to);
        return;
    }
    let row = g.nodes.row(from as usize);
    let mut cands: Vec<Key> = list.iter().chain([&to]).map(|&j| g.key(g.dist(row, j), j)).collect();
    cands.sort_unstable();
    let kept = prune(g, from, &cands, g.max_degree);
    g.adjacency[from as usize] = kept;
}

/// Link every node not reachable from the entry to a reachable one: the
/// nearest reachable node with spare degree, else the nearest one with its
/// farthest neighbor replaced.
fn repair_reachability(g: &mut ProximityGraph, beam: usize) {
    for _ in 0..64 {
        let mut seen = g.reachable();
        if seen.iter().all(|&s| s) {
            return;
        }
        let mut replaced = false;
        for u in 0..g.len() {
            if seen[u] {
                continue;
            }
            let pool = g.search_pool(g.nodes.row(u), beam.max(g.max_degree), None).0;
            let host = pool
                .iter()
                .find(|k| seen[k.node as usize] && g.adjacency[k.node as usize].len() < g.max_degree)
                .or_else(|| pool.iter().find(|k| seen[k.node as usize]))
                .map(|k| k.node as usize)
                .expect("search only returns reachable nodes");
            if g.adjacency[host].len() >= g.max_degree {
                let row = g.nodes.row(host);
                let far = (0..g.adjacency[host].len())
                    .max_by(|&a, &b| {
                        let (x, y) = (g.adjacency[host][a], g.adjacency[host][b]);
                        g.key(g.dist(row, x), x).cmp(&g.key(g.dist(row, y), y))
                    })
                    .unwrap();
                g.adjacency[host][far] = u as u32;
                replaced = true;
            } else {
                g.adjacency[host].push(u as u32);
            }
            bfs(&g.adjacency, u, &mut seen);
        }
        if !replaced {
            return;
        }
    }
    debug_assert!(g.reachable().iter().all(|&s| s), "reachability repair did not converge");
}

/// Best-first search for the `k` nearest nodes with a result pool of `beam`.
/// Ties are broken by ascending vector id. An empty graph gives an empty result.
pub fn graph_search(g: &ProximityGraph, q: &[f32], k: usize, beam: usize) -> Result<(Vec<Candidate>, TraversalStats)> {
    graph_search_sharded(g, q, k, beam, None)
}

/// [`graph_search`] that also counts cross-shard expansion steps under
/// `shard_of` (one label per node).
pub fn graph_search_sharded(
    g: &ProximityGraph,
    q: &[f32],
    k: usize,
    beam: usize,
    shard_of: Option<&[u32]>,
) -> Result<(Vec<Candidate>, TraversalStats)> {
    if k == 0 || beam < k {
        return Err(Error::usage(format!("need beam >= k >= 1, got k={k} beam={beam}")));
    }
    if !g.is_empty() && q.len() != g.dim() {
        return Err(Error::usage(format!("query dim {} != graph dim {}", q.len(), g.dim())));
    }
    if shard_of.is_some_and(|s| s.len() != g.len()) {
        return Err(Error::usage("shard labels must cover every node"));
    }
    let (pool, stats) = g.search_pool(q, beam, shard_of);
    let out = pool.into_iter().take(k).map(|key| Candidate::new(VectorId(key.id), key.distance)).collect();
    Ok((out, stats))
}

/// Smallest beam reaching a target mean recall, with its mean search cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamPoint {
    pub beam: usize,
    pub recall: f64,
    pub mean_distance_computations: f64,
    pub mean_expansions: f64,
}

/// Mean recall@k and mean cost over `queries` at one beam width.
pub fn evaluate_beam(g: &ProximityGraph, queries: &[DenseVector], truth: &GroundTruth, k: usize, beam: usize) -> Result<BeamPoint> {
    if queries.is_empty() || truth.len() < queries.len() {
        return Err(Error::usage("need at least one query and ground truth for each"));
    }
    let rows: Vec<(f64, TraversalStats)> = queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let (res, stats) = graph_search(g, q.as_slice(), k, beam)?;
            let ids: Vec<VectorId> = res.iter().map(|c| c.id).collect();
            Ok((recall_at_k(&ids, &truth.ids(i), k)?, stats))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    Ok(BeamPoint {
        beam,
        recall: rows.iter().map(|r| r.0).sum::<f64>() / n,
        mean_distance_computations: rows.iter().map(|r| r.1.distance_computations as f64).sum::<f64>() / n,
        mean_expansions: rows.iter().map(|r| r.1.expansions as f64).sum::<f64>() / n,
    })
}

/// Doubling then binary search on the beam, starting at `max(k, min_beam)`.
pub fn min_beam_for_recall(
    g: &ProximityGraph,
    queries: &[DenseVector],
    truth: &GroundTruth,
    k: usize,
    target: f64,
    min_beam: usize,
) -> Result<BeamPoint> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::usage(format!("target recall must be in (0, 1], got {target}")));
    }
    let cap = g.len().max(k);
    let mut lo = min_beam.max(k).min(cap);
    let mut at_lo = evaluate_beam(g, queries, truth, k, lo)?;
    if at_lo.recall >= target {
        return Ok(at_lo);
    }
    let mut hi_point;
    loop {
        if lo == cap {
            return Err(Error::UnreachableTarget { target, best_recall: at_lo.recall });
        }
        let hi = (lo * 2).min(cap);
        hi_point = evaluate_beam(g, queries, truth, k, hi)?;
        if hi_point.recall >= target {
            break;
        }
        lo = hi;
        at_lo = hi_point;
    }
    while hi_point.beam - lo > 1 {
        let mid = lo + (hi_point.beam - lo) / 2;
        let p = evaluate_beam(g, queries, truth, k, mid)?;
        if p.recall >= target {
            hi_point = p;
        } else {
            lo = mid;
        }
    }
    Ok(hi_point)
}
