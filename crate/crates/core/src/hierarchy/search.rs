use super::HierarchicalIndex;
use crate::error::{Error, Result};
use crate::graph::{graph_search, TraversalStats};
use crate::types::{merge_candidates, Candidate, SearchParams, VectorId};

/// Frame header (4-byte length + opcode) on every message.
pub(crate) const FRAME_OVERHEAD: usize = 5;

/// Bytes of a GET_PARTITION_RESULT request frame.
pub(crate) fn request_bytes(dim: usize, pids: usize) -> usize {
    FRAME_OVERHEAD + 1 + 4 + 4 + 4 * dim + 4 + 8 * pids
}

/// Bytes of a response frame carrying `count` candidates.
pub(crate) fn response_bytes(count: usize) -> usize {
    FRAME_OVERHEAD + 4 + Candidate::WIRE_SIZE * count
}

/// Work done at one clustered level of one query.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelTrace {
    /// Clustered level index (0 = base partitions).
    pub level: usize,
    pub pids: Vec<VectorId>,
    pub partitions_scanned: usize,
    /// Distance computations, counting replicated members each time.
    pub vectors_scanned: usize,
    /// Wire bytes if every pid were served by one node.
    pub request_bytes: usize,
    pub response_bytes: usize,
    /// Pooled top-`m` of this level, ascending.
    pub top: Vec<Candidate>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchTrace {
    pub root: TraversalStats,
    /// Top-`m` root vectors.
    pub root_top: Vec<Candidate>,
    /// In search order: top clustered level first, level 0 last.
    pub levels: Vec<LevelTrace>,
}

impl SearchTrace {
    pub fn fetch_rounds(&self) -> usize {
        self.levels.len()
    }

    /// Root graph work plus every partition member scanned.
    pub fn vectors_scanned(&self) -> usize {
        self.root.distance_computations as usize + self.levels.iter().map(|l| l.vectors_scanned).sum::<usize>()
    }

    pub fn wire_bytes(&self) -> usize {
        self.levels.iter().map(|l| l.request_bytes + l.response_bytes).sum()
    }
}

/// Top-`k` search. Each clustered level fetches the partitions named by the
/// previous level's top-`m`, scans every member, and pools the results,
/// keeping the minimum distance for replicated ids.
pub fn search(index: &HierarchicalIndex, q: &[f32], params: &SearchParams) -> Result<(Vec<Candidate>, SearchTrace)> {
    params.validate()?;
    if q.len() != index.dim {
        return Err(Error::usage(format!("query dim {} != index dim {}", q.len(), index.dim)));
    }
    let mut trace = SearchTrace::default();
    if index.levels.is_empty() {
        let (top, stats) = graph_search(&index.root, q, params.k, params.root_beam)?;
        trace.root = stats;
        trace.root_top = top.clone();
        return Ok((top, trace));
    }
    let (mut top, stats) = graph_search(&index.root, q, params.m, params.root_beam)?;
    trace.root = stats;
    trace.root_top = top.clone();
    for level in (0..index.levels.len()).rev() {
        let pids: Vec<VectorId> = top.iter().map(|c| c.id).collect();
        let (next, scanned) = scan_level(index, level, &pids, q, params.m)?;
        trace.levels.push(LevelTrace {
            level,
            partitions_scanned: pids.len(),
            vectors_scanned: scanned,
            request_bytes: request_bytes(index.dim, pids.len()),
            response_bytes: response_bytes(next.len()),
            pids,
            top: next.clone(),
        });
        top = next;
    }
    top.truncate(params.k);
    Ok((top, trace))
}

/// Scan `pids` at `level` and return the pooled, de-duplicated top-`m` with
/// the number of distances computed.
pub(crate) fn scan_level(
    index: &HierarchicalIndex,
    level: usize,
    pids: &[VectorId],
    q: &[f32],
    m: usize,
) -> Result<(Vec<Candidate>, usize)> {
    let mut pool = Vec::new();
    for &pid in pids {
        let part = index.partition(level, pid)?;
        for (id, v) in part.members.iter() {
            pool.push(Candidate::new(id, index.metric.distance(q, v)));
        }
    }
    let scanned = pool.len();
    Ok((merge_candidates(pool, m), scanned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{brute_force_topk, generate_synthetic};
    use crate::hierarchy::{build_levels, BuildConfig};

    #[test]
    fn graph_only_index_matches_graph_search() {
        let ds = generate_synthetic(300, 4, 3, 0.1, 1).unwrap();
        let idx = build_levels(&ds, &BuildConfig::fixed(1000, 0.1).unwrap()).unwrap();
        let q = [0.3f32, 0.2, 0.9, 0.1];
        let p = SearchParams::new(20, 5);
        let (res, trace) = search(&idx, &q, &p).unwrap();
        let (g, _) = graph_search(idx.root(), &q, 5, p.root_beam).unwrap();
        assert_eq!(res, g);
        assert_eq!(trace.fetch_rounds(), 0);
    }

    #[test]
    fn exhaustive_m_finds_exact_answers() {
        let ds = generate_synthetic(3000, 6, 10, 0.1, 2).unwrap();
        let idx = build_levels(&ds, &BuildConfig::fixed(30, 0.1).unwrap()).unwrap();
        assert_eq!(idx.clustered_levels(), 2);
        let queries = generate_synthetic(10, 6, 10, 0.1, 50).unwrap().to_dense();
        let truth = brute_force_topk(&ds, &queries, 10).unwrap();
        let m = idx.levels()[0].partitions.len().max(idx.base_count());
        let p = SearchParams::new(m, 10);
        for (i, q) in queries.iter().enumerate() {
            let (res, trace) = search(&idx, q.as_slice(), &p).unwrap();
            assert_eq!(res, truth.rows[i]);
            assert_eq!(trace.fetch_rounds(), 2);
            assert!(trace.levels.iter().all(|l| l.pids.len() <= m));
        }
        let (res, _) = search(&idx, ds.row(123), &SearchParams::new(64, 1)).unwrap();
        assert_eq!(res[0].distance, 0.0);
    }

    #[test]
    fn missing_partition_is_corruption() {
        let ds = generate_synthetic(500, 3, 4, 0.1, 3).unwrap();
        let mut idx = build_levels(&ds, &BuildConfig::fixed(20, 0.1).unwrap()).unwrap();
        let top = idx.levels.len() - 1;
        let gone = idx.levels[top].partitions.pop().unwrap().pid;
        let p = SearchParams::new(idx.root().len(), 1);
        let err = search(&idx, &[0.5, 0.5, 0.5], &p).unwrap_err();
        assert!(matches!(err, Error::IndexCorruption { level, pid } if level == top && pid == gone));
        assert!(idx.validate().is_err());
    }
}
