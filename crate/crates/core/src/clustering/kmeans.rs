//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{DistanceMetric, VectorSet};

/// Output of [`kmeans`]: `k` row-major centroids and, per input row, the
/// index of its cluster. Every cluster is non-empty.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub dim: usize,
    pub centroids: Vec<f32>,
    pub assignment: Vec<u32>,
    pub iterations: usize,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim.max(1)
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Sum over rows of the metric distance to the assigned centroid.
    pub fn inertia(&self, data: &[f32], metric: DistanceMetric) -> f64 {
        data.chunks_exact(self.dim)
            .zip(&self.assignment)
            .map(|(row, &c)| metric.distance(row, self.centroid(c as usize)) as f64)
            .sum()
    }
}

/// Cluster `vectors` into exactly `k` non-empty groups.
///
/// Seeding is k-means++; Lloyd iterations stop after `max_iters` or when no
/// assignment changes. A cluster that empties out is re-seeded with the point
/// farthest from its own centroid. Deterministic for a fixed seed.
pub fn kmeans(vectors: &VectorSet, k: usize, metric: DistanceMetric, seed: u64, max_iters: usize) -> Result<KMeans> {
    let n = vectors.len();
    if k == 0 || k > n {
        return Err(Error::usage(format!("k must be in 1..={n}, got {k}")));
    }
    Ok(kmeans_rows(vectors.data(), vectors.dim(), k, metric, seed, max_iters))
}

pub(crate) fn kmeans_rows(
    data: &[f32],
    dim: usize,
    k: usize,
    metric: DistanceMetric,
    seed: u64,
    max_iters: usize,
) -> KMeans {
    let n = data.len() / dim;
    debug_assert!(k >= 1 && k <= n);
    if k == n {
        return KMeans { dim, centroids: data.to_vec(), assignment: (0..n as u32).collect(), iterations: 0 };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(data, dim, k, metric, &mut rng);
    let mut assignment = assign(data, dim, &centroids, metric);
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        update_means(data, dim, &assignment, &mut centroids);
        fill_empty(data, dim, &mut assignment, &mut centroids, metric);
        let next = assign(data, dim, &centroids, metric);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    fill_empty(data, dim, &mut assignment, &mut centroids, metric);
    update_means(data, dim, &assignment, &mut centroids);
    KMeans { dim, centroids, assignment, iterations }
}

fn plus_plus(data: &[f32], dim: usize, k: usize, metric: DistanceMetric, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut chosen = vec![false; n];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    chosen[first] = true;
    centroids.extend_from_slice(row(first));
    let mut best: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| metric.distance(row(i), row(first)).max(0.0) as f64)
        .collect();
    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // float slack at the end of the scan can land on a zero-weight row
            if chosen[pick] || best[pick] == 0.0 {
                pick = best.iter().rposition(|&w| w > 0.0).unwrap();
            }
            pick
        } else {
            // all remaining points coincide with a center
            chosen.iter().position(|&c| !c).unwrap()
        };
        chosen[pick] = true;
        let c = row(pick).to_vec();
        centroids.extend_from_slice(&c);
        best.par_iter_mut().enumerate().for_each(|(i, b)| {
            let d = metric.distance(row(i), &c).max(0.0) as f64;
            if d < *b {
                *b = d;
            }
        });
        best[pick] = 0.0;
    }
    centroids
}

/// Index of the nearest centroid for every row; ties go to the lower index.
pub(crate) fn assign(data: &[f32], dim: usize, centroids: &[f32], metric: DistanceMetric) -> Vec<u32> {
    data.par_chunks(dim)
        .map(|row| nearest(row, centroids, dim, metric).0 as u32)
        .collect()
}

#[inline]
pub(crate) fn nearest(row: &[f32], centroids: &[f32], dim: usize, metric: DistanceMetric) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = metric.distance(row, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Recompute centroids as member means. Empty clusters keep their old centroid.
fn update_means(data: &[f32], dim: usize, assignment: &[u32], centroids: &mut [f32]) {
    let k = centroids.len() / dim;
    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &c) in data.chunks_exact(dim).zip(assignment) {
        let c = c as usize;
        counts[c] += 1;
        for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row) {
            *s += x as f64;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let inv = 1.0 / counts[c] as f64;
        for j in 0..dim {
            centroids[c * dim + j] = (sums[c * dim + j] * inv) as f32;
        }
    }
}

/// Give every empty cluster the point farthest from its current centroid,
/// taken from a cluster that can spare it.
fn fill_empty(data: &[f32], dim: usize, assignment: &mut [u32], centroids: &mut [f32], metric: DistanceMetric) {
    let k = centroids.len() / dim;
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c as usize] += 1;
    }
    if counts.iter().all(|&c| c > 0) {
        return;
    }
    let mut dist: Vec<f32> = data
        .par_chunks(dim)
        .zip(assignment.par_iter())
        .map(|(row, &c)| metric.distance(row, &centroids[c as usize * dim..(c as usize + 1) * dim]))
        .collect();
    for e in 0..k {
        if counts[e] > 0 {
            continue;
        }
        let mut far: Option<(usize, f32)> = None;
        for (i, &d) in dist.iter().enumerate() {
            if counts[assignment[i] as usize] > 1 && far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        let (p, _) = far.expect("n >= k guarantees a donor cluster");
        counts[assignment[p] as usize] -= 1;
        assignment[p] = e as u32;
        counts[e] = 1;
        centroids[e * dim..(e + 1) * dim].copy_from_slice(&data[p * dim..(p + 1) * dim]);
        dist[p] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::VectorId;

    fn set(dim: usize, data: Vec<f32>) -> VectorSet {
        let n = data.len() / dim;
        VectorSet::from_parts(dim, (0..n as u64).map(VectorId).collect(), data).unwrap()
    }

    #[test]
    fn k_equals_n_is_identity() {
        let s = set(2, vec![0., 0., 5., 5., 9., 1.]);
        let km = kmeans(&s, 3, DistanceMetric::SquaredL2, 1, 20).unwrap();
        assert_eq!(km.assignment, vec![0, 1, 2]);
        assert_eq!(km.centroids, s.data());
    }

    #[test]
    fn two_separated_groups_give_group_means() {
        let s = set(1, vec![0., 1., 2., 100., 101., 102.]);
        let km = kmeans(&s, 2, DistanceMetric::SquaredL2, 7, 20).unwrap();
        let mut cents = km.centroids.clone();
        cents.sort_by(f32::total_cmp);
        assert_eq!(cents, vec![1.0, 101.0]);
        assert_eq!(km.assignment[0], km.assignment[2]);
        assert_ne!(km.assignment[0], km.assignment[3]);
    }

    #[test]
    fn k_out_of_range_is_usage_error() {
        let s = set(1, vec![0., 1.]);
        assert!(matches!(kmeans(&s, 3, DistanceMetric::SquaredL2, 0, 5), Err(Error::Usage(_))));
        assert!(kmeans(&s, 0, DistanceMetric::SquaredL2, 0, 5).is_err());
    }

    #[test]
    fn duplicates_still_yield_k_nonempty_clusters() {
        let s = set(1, vec![3.0; 10]);
        let km = kmeans(&s, 4, DistanceMetric::SquaredL2, 5, 10).unwrap();
        let mut counts = [0; 4];
        for &a in &km.assignment {
            counts[a as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
    }

    #[test]
    fn deterministic_per_seed() {
        let data: Vec<f32> = (0..400).map(|i| ((i * 37) % 101) as f32 / 7.0).collect();
        let s = set(4, data);
        let a = kmeans(&s, 9, DistanceMetric::SquaredL2, 11, 20).unwrap();
        let b = kmeans(&s, 9, DistanceMetric::SquaredL2, 11, 20).unwrap();
        assert_eq!(a, b);
    }
}
