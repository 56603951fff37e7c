//! Accuracy metrics.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::types::{Candidate, VectorId};

/// `|first-k(result) ∩ first-k(truth)| / k`.
pub fn recall_at_k(result: &[VectorId], truth: &[VectorId], k: usize) -> Result<f64> {
    check_k(truth.len(), k)?;
    let wanted: HashSet<VectorId> = truth[..k].iter().copied().collect();
    let hits = result.iter().take(k).filter(|id| wanted.contains(id)).count();
    Ok(hits as f64 / k as f64)
}

/// Recall that also accepts any result whose distance equals the k-th true
/// distance, so ties at the cut-off never count against a search.
pub fn recall_at_k_with_ties(result: &[Candidate], truth: &[Candidate], k: usize) -> Result<f64> {
    check_k(truth.len(), k)?;
    let wanted: HashSet<VectorId> = truth[..k].iter().map(|c| c.id).collect();
    let kth = truth[k - 1].distance;
    let hits = result
        .iter()
        .take(k)
        .filter(|c| wanted.contains(&c.id) || c.distance == kth)
        .count();
    Ok(hits.min(k) as f64 / k as f64)
}

fn check_k(truth_len: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::usage("k must be positive"));
    }
    if truth_len < k {
        return Err(Error::usage(format!("ground truth has {truth_len} entries, need {k}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u64]) -> Vec<VectorId> {
        v.iter().map(|&i| VectorId(i)).collect()
    }

    #[test]
    fn identical_disjoint_partial() {
        let t = ids(&[1, 2, 3, 4, 5]);
        assert_eq!(recall_at_k(&t, &t, 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ids(&[6, 7, 8, 9, 10]), &t, 5).unwrap(), 0.0);
        let truth = ids(&(0..10).collect::<Vec<_>>());
        let mut res = truth.clone();
        res[9] = VectorId(99);
        assert!((recall_at_k(&res, &truth, 10).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_k_is_usage_error() {
        assert!(matches!(recall_at_k(&[], &[], 0), Err(Error::Usage(_))));
        assert!(recall_at_k(&[], &ids(&[1]), 2).is_err());
    }

    #[test]
    fn short_result_counts_missing_as_misses() {
        assert_eq!(recall_at_k(&ids(&[1]), &ids(&[1, 2]), 2).unwrap(), 0.5);
    }

    #[test]
    fn ties_at_cutoff_accepted() {
        let c = |id, d| Candidate::new(VectorId(id), d);
        let truth = vec![c(1, 0.5), c(2, 1.0), c(3, 1.0)];
        // id 3 ties with the 2nd true distance
        let result = vec![c(1, 0.5), c(3, 1.0)];
        assert_eq!(recall_at_k_with_ties(&result, &truth, 2).unwrap(), 1.0);
        let worse = vec![c(1, 0.5), c(4, 1.5)];
        assert_eq!(recall_at_k_with_ties(&worse, &truth, 2).unwrap(), 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bounded_and_monotone(truth in prop::collection::hash_set(0u64..200, 10),
                                    extra in prop::collection::vec(0u64..200, 0..10)) {
                let truth: Vec<VectorId> = truth.into_iter().map(VectorId).collect();
                let k = truth.len();
                let mut result: Vec<VectorId> = Vec::new();
                for &i in &extra {
                    if !result.contains(&VectorId(i)) {
                        result.push(VectorId(i));
                    }
                }
                let before = recall_at_k(&result, &truth, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&before));
                // extending with correct ids never lowers recall
                for t in &truth {
                    if !result.contains(t) {
                        result.push(*t);
                    }
                }
                let after = recall_at_k(&result, &truth, k).unwrap();
                prop_assert!(after >= before);
            }
        }
    }
}
