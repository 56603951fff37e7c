use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::types::{Candidate, VectorId};

/// Max-heap entry ordered by (distance, id); the heap top is the worst kept.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Scored {
    pub distance: f32,
    pub id: VectorId,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }
}

/// Bounded collector of the `k` smallest candidates.
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Scored>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    #[inline]
    pub fn push(&mut self, id: VectorId, distance: f32) {
        if self.k == 0 {
            return;
        }
        let s = Scored { distance, id };
        if self.heap.len() < self.k {
            self.heap.push(s);
        } else if s < *self.heap.peek().unwrap() {
            *self.heap.peek_mut().unwrap() = s;
        }
    }

    pub fn into_sorted(self) -> Vec<Candidate> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|s| Candidate::new(s.id, s.distance))
            .collect()
    }
}
