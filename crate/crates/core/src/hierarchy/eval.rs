use rayon::prelude::*;

use super::{search, HierarchicalIndex};
use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::metrics::recall_at_k_with_ties;
use crate::types::{Candidate, DenseVector, SearchParams, VectorId};

/// Which partitions contain each vector, level by level (compressed rows).
pub struct Ancestry {
    /// `offsets[i][v]..offsets[i][v+1]` indexes `parents[i]` for level-`i` vector `v`.
    offsets: Vec<Vec<u32>>,
    parents: Vec<Vec<u32>>,
}

impl Ancestry {
    pub fn new(index: &HierarchicalIndex) -> Self {
        let mut offsets = Vec::new();
        let mut parents = Vec::new();
        for level in index.levels() {
            let count = level
                .partitions
                .iter()
                .flat_map(|p| p.members.ids())
                .map(|id| id.index() as usize + 1)
                .max()
                .unwrap_or(0);
            let mut deg = vec![0u32; count + 1];
            for p in &level.partitions {
                for id in p.members.ids() {
                    deg[id.index() as usize + 1] += 1;
                }
            }
            for v in 1..deg.len() {
                deg[v] += deg[v - 1];
            }
            let mut fill = deg.clone();
            let mut flat = vec![0u32; *deg.last().unwrap() as usize];
            for (j, p) in level.partitions.iter().enumerate() {
                for id in p.members.ids() {
                    let slot = &mut fill[id.index() as usize];
                    flat[*slot as usize] = j as u32;
                    *slot += 1;
                }
            }
            offsets.push(deg);
            parents.push(flat);
        }
        Ancestry { offsets, parents }
    }

    fn parents_of(&self, level: usize, v: usize) -> &[u32] {
        let o = &self.offsets[level];
        if v + 1 >= o.len() {
            return &[];
        }
        &self.parents[level][o[v] as usize..o[v + 1] as usize]
    }

    /// Ancestors of base vector `id` at every level: element `j` holds the
    /// level-`j` vectors whose pid chain reaches `id` (element 0 is `{id}`).
    pub fn ancestors(&self, id: VectorId) -> Vec<Vec<VectorId>> {
        let mut out = vec![vec![id]];
        for level in 0..self.parents.len() {
            let mut next: Vec<VectorId> = out[level]
                .iter()
                .flat_map(|v| self.parents_of(level, v.index() as usize))
                .map(|&j| VectorId::new(level as u8 + 1, j as u64))
                .collect();
            next.sort_unstable();
            next.dedup();
            out.push(next);
        }
        out
    }
}

/// Aggregates for one `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub m: usize,
    pub k: usize,
    pub recall: f64,
    pub mean_vectors_scanned: f64,
    pub mean_wire_bytes: f64,
    /// Fetch rounds per query; every query in the set has this many.
    pub fetch_rounds: usize,
    /// Fraction of queries whose top-`m` at a level contains an ancestor of
    /// every true top-`k` vector. Root level first, level 0 last.
    pub per_level_recall: Vec<f64>,
}

/// Search every query at each `m` and aggregate recall, cost and per-level
/// recall. Fails if any query's round count differs from the level count.
pub fn evaluate(
    index: &HierarchicalIndex,
    queries: &[DenseVector],
    truth: &GroundTruth,
    ms: &[usize],
    k: usize,
) -> Result<Vec<EvalRow>> {
    if queries.is_empty() || truth.len() < queries.len() || truth.depth() < k {
        return Err(Error::usage("ground truth must cover every query to depth k"));
    }
    let ancestry = Ancestry::new(index);
    let chains: Vec<Vec<Vec<Vec<VectorId>>>> = truth.rows[..queries.len()]
        .par_iter()
        .map(|row| row[..k].iter().map(|c| ancestry.ancestors(c.id)).collect())
        .collect();
    let levels = index.clustered_levels();
    ms.iter()
        .map(|&m| {
            let params = SearchParams::new(m, k);
            let per_query: Vec<(f64, usize, usize, usize, Vec<bool>)> = queries
                .par_iter()
                .enumerate()
                .map(|(i, q)| {
                    let (res, trace) = search(index, q.as_slice(), &params)?;
                    let recall = recall_at_k_with_ties(&res, &truth.rows[i], k)?;
                    // lists[j] = top-m of level j, root (level `levels`) included
                    let mut lists: Vec<&[Candidate]> = vec![&[]; levels + 1];
                    lists[levels] = &trace.root_top;
                    for l in &trace.levels {
                        lists[l.level] = &l.top;
                    }
                    let hits = (0..=levels)
                        .rev()
                        .map(|j| chains[i].iter().all(|anc| lists[j].iter().any(|c| anc[j].binary_search(&c.id).is_ok())))
                        .collect();
                    Ok((recall, trace.vectors_scanned(), trace.wire_bytes(), trace.fetch_rounds(), hits))
                })
                .collect::<Result<_>>()?;
            let n = per_query.len() as f64;
            if per_query.iter().any(|r| r.3 != levels) {
                return Err(Error::usage("a query used a different number of fetch rounds than the index has levels"));
            }
            Ok(EvalRow {
                m,
                k,
                recall: per_query.iter().map(|r| r.0).sum::<f64>() / n,
                mean_vectors_scanned: per_query.iter().map(|r| r.1 as f64).sum::<f64>() / n,
                mean_wire_bytes: per_query.iter().map(|r| r.2 as f64).sum::<f64>() / n,
                fetch_rounds: levels,
                per_level_recall: (0..=levels)
                    .map(|j| per_query.iter().filter(|r| r.4[j]).count() as f64 / n)
                    .collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{brute_force_topk, generate_synthetic};
    use crate::hierarchy::{build_levels, BuildConfig};

    #[test]
    fn ancestors_follow_membership() {
        let ds = generate_synthetic(2000, 4, 8, 0.1, 3).unwrap();
        let idx = build_levels(&ds, &BuildConfig::fixed(20, 0.1).unwrap()).unwrap();
        let anc = Ancestry::new(&idx);
        for v in [0u64, 5, 1999] {
            let chain = anc.ancestors(VectorId(v));
            assert_eq!(chain.len(), 3);
            for j in 1..3 {
                assert!(!chain[j].is_empty());
                for a in &chain[j] {
                    let part = idx.partition(j - 1, *a).unwrap();
                    assert!(part.members.ids().iter().any(|m| chain[j - 1].contains(m)));
                }
            }
        }
    }

    #[test]
    fn per_level_recall_is_monotone_and_exhaustive_m_is_perfect() {
        let ds = generate_synthetic(5000, 6, 20, 0.1, 4).unwrap();
        let idx = build_levels(&ds, &BuildConfig::fixed(50, 0.1).unwrap()).unwrap();
        let queries = generate_synthetic(40, 6, 20, 0.1, 77).unwrap().to_dense();
        let truth = brute_force_topk(&ds, &queries, 10).unwrap();
        let rows = evaluate(&idx, &queries, &truth, &[10, 20, 5000], 10).unwrap();
        for r in &rows {
            assert_eq!(r.fetch_rounds, 2);
            assert_eq!(r.per_level_recall.len(), 3);
            assert!(r.per_level_recall.windows(2).all(|w| w[0] >= w[1]), "{:?}", r.per_level_recall);
        }
        assert!(rows[0].recall <= rows[1].recall);
        assert_eq!(rows[2].recall, 1.0);
        assert!(rows[2].per_level_recall.iter().all(|&x| x == 1.0));
    }
}
