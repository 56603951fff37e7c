use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::VectorId;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a-64 over the 8 little-endian bytes of the pid. Stable across
/// releases; every deployment and the on-disk layout depend on it.
pub fn placement_hash(pid: VectorId) -> u64 {
    pid.to_le_bytes().iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Maps every pid of an index to a store node: `placement_hash(pid) % nodes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    node_count: usize,
    nodes: BTreeMap<VectorId, usize>,
}

impl Placement {
    pub fn new(node_count: usize, pids: impl IntoIterator<Item = VectorId>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::usage("node count must be at least 1"));
        }
        let nodes = pids.into_iter().map(|p| (p, node_for(p, node_count))).collect();
        Ok(Placement { node_count, nodes })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Node for a pid. Pids outside the index still hash to a node.
    pub fn node_of(&self, pid: VectorId) -> usize {
        self.nodes.get(&pid).copied().unwrap_or_else(|| node_for(pid, self.node_count))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VectorId, usize)> + '_ {
        self.nodes.iter().map(|(&p, &n)| (p, n))
    }

    /// Partitions placed on each node.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.node_count];
        for &n in self.nodes.values() {
            c[n] += 1;
        }
        c
    }

    /// Group `pids` by owning node, keeping their order within a node.
    pub fn group(&self, pids: &[VectorId]) -> BTreeMap<usize, Vec<VectorId>> {
        let mut out: BTreeMap<usize, Vec<VectorId>> = BTreeMap::new();
        for &p in pids {
            out.entry(self.node_of(p)).or_default().push(p);
        }
        out
    }
}

pub(crate) fn node_for(pid: VectorId, node_count: usize) -> usize {
    (placement_hash(pid) % node_count as u64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        // FNV-1a-64 of eight zero bytes, computed by hand from the definition.
        let mut h = FNV_OFFSET;
        for _ in 0..8 {
            h = h.wrapping_mul(FNV_PRIME);
        }
        assert_eq!(placement_hash(VectorId(0)), h);
        assert_eq!(placement_hash(VectorId(0)), 0xa8c7_f832_281a_39c5);
    }

    #[test]
    fn one_node_takes_everything() {
        let p = Placement::new(1, (0..100).map(|i| VectorId::new(1, i))).unwrap();
        assert!(p.iter().all(|(_, n)| n == 0));
        assert!(Placement::new(0, []).is_err());
    }

    #[test]
    fn ten_thousand_pids_within_ten_percent() {
        let p = Placement::new(5, (0..10_000).map(|i| VectorId::new(1, i))).unwrap();
        for c in p.counts() {
            assert!((1800..=2200).contains(&c), "{:?}", p.counts());
        }
        let again = Placement::new(5, (0..10_000).map(|i| VectorId::new(1, i))).unwrap();
        assert_eq!(p, again);
    }
}
