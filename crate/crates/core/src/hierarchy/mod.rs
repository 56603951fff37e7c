//! Multi-level index: bottom-up build and top-down search.
//!
//! Level 0 holds the base vectors grouped into partitions; the centroids of
//! those partitions are the level-1 vectors, which are partitioned again, and
//! so on until the remaining centroids fit the root budget. The root is a
//! proximity graph kept in memory. A query searches the root graph for its
//! top-`m` vectors, then at every level below fetches exactly those
//! partitions, scans them, and keeps the pooled top-`m`; the last level
//! returns top-`k`. One fetch round per clustered level, whatever the data
//! size.

mod eval;
pub(crate) mod search;
mod store;

pub use eval::{evaluate, Ancestry, EvalRow};
pub use search::{search, LevelTrace, SearchTrace};
pub use store::{level_path, load_index, manifest_path, root_path, save_index, IndexManifest};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::seq::index;

use crate::clustering::{partition_at_density, replicate_boundary, Partition, PartitionDensity, PartitionOptions};
use crate::dataset::{brute_force_topk, Dataset};
use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphParams, ProximityGraph};
use crate::profiler::{select_balanced_density, ProfileConfig, FALLBACK_DENSITY};
use crate::types::{DistanceMetric, VectorId, VectorSet};

/// How large the root level may be.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    Vectors(usize),
    /// Memory for root vectors plus adjacency; converted to a count with
    /// `bytes / (4·dim + 8·R)`.
    Bytes(u64),
}

impl Budget {
    pub fn vector_count(self, dim: usize, max_degree: usize) -> usize {
        match self {
            Budget::Vectors(n) => n,
            Budget::Bytes(b) => (b / (4 * dim as u64 + 8 * max_degree as u64).max(1)) as usize,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DensityChoice {
    /// One density for every clustered level.
    Fixed(PartitionDensity),
    /// Profile every level on a fresh sample of its own vectors.
    Auto(AutoDensity),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AutoDensity {
    pub profile: ProfileConfig,
    pub sample_size: usize,
    /// Held out from the level's vectors to act as profiling queries.
    pub query_count: usize,
}

impl Default for AutoDensity {
    fn default() -> Self {
        AutoDensity { profile: ProfileConfig::default(), sample_size: 100_000, query_count: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildConfig {
    pub budget: Budget,
    pub density: DensityChoice,
    pub seed: u64,
    pub graph: GraphParams,
    pub partition: PartitionOptions,
    /// Boundary replication; `max_copies = 1` disables it.
    pub epsilon: f64,
    pub max_copies: usize,
}

impl BuildConfig {
    pub fn new(budget: Budget, density: DensityChoice) -> Self {
        BuildConfig {
            budget,
            density,
            seed: 0,
            graph: GraphParams::default(),
            partition: PartitionOptions::default(),
            epsilon: 0.1,
            max_copies: 8,
        }
    }

    pub fn fixed(budget: usize, density: f64) -> Result<Self> {
        Ok(Self::new(Budget::Vectors(budget), DensityChoice::Fixed(PartitionDensity::new(density)?)))
    }
}

/// One clustered level: partitions of level-`i` vectors, `partitions[j]`
/// keyed by pid `(i+1, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub density: f64,
    pub replication_factor: f64,
    pub partitions: Vec<Partition>,
}

impl Level {
    pub fn member_count(&self) -> usize {
        self.partitions.iter().map(Partition::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalIndex {
    pub(crate) dim: usize,
    pub(crate) metric: DistanceMetric,
    pub(crate) levels: Vec<Level>,
    pub(crate) root: ProximityGraph,
    pub(crate) seed: u64,
    pub(crate) budget: usize,
    pub(crate) base_count: usize,
}

impl HierarchicalIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    /// Clustered levels, base level first. Empty for a graph-only index.
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn clustered_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn root(&self) -> &ProximityGraph {
        &self.root
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    /// Partition `pid` from clustered level `level`.
    pub fn partition(&self, level: usize, pid: VectorId) -> Result<&Partition> {
        self.levels
            .get(level)
            .and_then(|l| l.partitions.get(pid.index() as usize))
            .filter(|p| p.pid == pid)
            .ok_or(Error::IndexCorruption { level, pid })
    }

    /// Every pid of every level.
    pub fn pids(&self) -> impl Iterator<Item = VectorId> + '_ {
        self.levels.iter().flat_map(|l| l.partitions.iter().map(|p| p.pid))
    }

    /// Check the pid chain: root nodes are pids of the top level, every
    /// level's members are pids of the level below, and level 0 covers the
    /// base ids.
    pub fn validate(&self) -> Result<()> {
        let mut above: Vec<VectorId> = self.root.nodes().ids().to_vec();
        for (i, level) in self.levels.iter().enumerate().rev() {
            let expect = i as u8 + 1;
            for (j, p) in level.partitions.iter().enumerate() {
                if p.pid != VectorId::new(expect, j as u64) || p.is_empty() {
                    return Err(Error::IndexCorruption { level: i, pid: p.pid });
                }
            }
            above.sort_unstable();
            let pids: Vec<VectorId> = level.partitions.iter().map(|p| p.pid).collect();
            if above != pids {
                let missing = above.iter().find(|a| !pids.contains(a)).or(pids.first()).copied().unwrap_or_default();
                return Err(Error::IndexCorruption { level: i, pid: missing });
            }
            let mut members: Vec<VectorId> = level.partitions.iter().flat_map(|p| p.members.ids().iter().copied()).collect();
            members.sort_unstable();
            members.dedup();
            above = members;
        }
        let base: Vec<VectorId> = (0..self.base_count as u64).map(VectorId).collect();
        if above != base {
            return Err(Error::usage("base level does not cover ids 0..n"));
        }
        Ok(())
    }
}

/// `ceil(log_{1/D}(n / budget))` for `n > budget`, else 0.
pub fn expected_height(n: usize, density: f64, budget: usize) -> usize {
    let mut levels = 0;
    let mut nominal = n as f64;
    while !within(nominal, budget) {
        nominal *= density;
        levels += 1;
    }
    levels
}

fn within(nominal: f64, budget: usize) -> bool {
    nominal <= budget as f64 * (1.0 + 1e-9)
}

/// Build bottom-up until the remaining centroids fit the budget.
///
/// The level count is the smallest `L` with `n·D_1·…·D_L ≤ budget`, using
/// the nominal (unrounded) product, so a uniform density gives exactly
/// `ceil(log_{1/D}(n / budget))`. Clustering continues past that point only
/// if rounding left more than `budget` actual centroids.
pub fn build_levels(data: &Dataset, cfg: &BuildConfig) -> Result<HierarchicalIndex> {
    let n = data.len();
    if n == 0 {
        return Err(Error::usage("cannot index an empty dataset"));
    }
    let dim = data.dim();
    let budget = cfg.budget.vector_count(dim, cfg.graph.max_degree);
    if budget == 0 {
        return Err(Error::usage("budget must allow at least one root vector"));
    }
    if cfg.max_copies == 0 || !(cfg.epsilon >= 0.0) {
        return Err(Error::usage("epsilon must be >= 0 and max_copies >= 1"));
    }
    let metric = data.metric;
    let base: Vec<VectorId> = (0..n as u64).map(VectorId).collect();
    let mut current = VectorSet::from_parts(dim, base, data.vectors().data().to_vec())?;
    let mut nominal = n as f64;
    let mut levels = Vec::new();

    while !(within(nominal, budget) && current.len() <= budget) {
        let i = levels.len();
        let level_seed = cfg.seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let density = match cfg.density {
            DensityChoice::Fixed(d) => d,
            DensityChoice::Auto(auto) => profile_level(&current, metric, &auto, level_seed)?,
        };
        log::info!("level {i}: {} vectors at density {}", current.len(), density.value());
        let mut clusters = partition_at_density(&current, density, metric, level_seed, &cfg.partition)?;
        if clusters.partitions.len() >= current.len() {
            return Err(Error::usage(format!("density {} does not shrink a level of {}", density.value(), current.len())));
        }
        if cfg.max_copies > 1 {
            clusters = replicate_boundary(&clusters, cfg.epsilon, cfg.max_copies, metric)?;
        }
        levels.push(Level {
            density: density.value(),
            replication_factor: clusters.replication_factor,
            partitions: clusters.partitions,
        });
        current = clusters.centroids;
        nominal *= density.value();
    }
    let root = build_graph(&current, metric, &GraphParams { seed: cfg.seed, ..cfg.graph })?;
    Ok(HierarchicalIndex { dim, metric, levels, root, seed: cfg.seed, budget, base_count: n })
}

/// Pick a density for one level from a fresh sample of its vectors, with
/// profiling queries held out of that sample.
fn profile_level(vectors: &VectorSet, metric: DistanceMetric, auto: &AutoDensity, seed: u64) -> Result<PartitionDensity> {
    let n = vectors.len();
    let queries = auto.query_count.min(n / 10);
    let sample_n = auto.sample_size.min(n - queries);
    if queries == 0 || sample_n < auto.profile.k.max(2) * 10 {
        return PartitionDensity::new(FALLBACK_DENSITY);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, n, sample_n + queries).into_vec();
    let (q_rows, s_rows) = picked.split_at(queries);
    let sample = Dataset::from_rows(vectors.dim(), vectors.select(s_rows).data().to_vec(), metric)?;
    let queries = vectors.select(q_rows).to_dense();
    let truth = brute_force_topk(&sample, &queries, auto.profile.k)?;
    let cfg = ProfileConfig { seed, ..auto.profile };
    let profile = select_balanced_density(&sample, &queries, &truth, &cfg)?;
    log::info!("profiled {} probes, chose density {}", profile.probes.len(), profile.chosen.value());
    Ok(profile.chosen)
}
