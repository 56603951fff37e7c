//! Shared domain types: identifiers, vectors, metrics, search parameters and
//! the (id, distance) candidate that flows between levels and across the wire.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// 64-bit vector identity.
///
/// The top byte carries the level the vector lives on, so ids at different
/// levels never collide. Base vectors are level 0 and therefore have ids
/// `0..n`. A partition's pid is the id of its centroid one level up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VectorId(pub u64);

impl VectorId {
    const LEVEL_SHIFT: u32 = 56;
    const INDEX_MASK: u64 = (1 << Self::LEVEL_SHIFT) - 1;

    pub fn new(level: u8, index: u64) -> Self {
        debug_assert!(index <= Self::INDEX_MASK);
        VectorId(((level as u64) << Self::LEVEL_SHIFT) | (index & Self::INDEX_MASK))
    }

    pub fn level(self) -> u8 {
        (self.0 >> Self::LEVEL_SHIFT) as u8
    }

    /// Position within its level.
    pub fn index(self) -> u64 {
        self.0 & Self::INDEX_MASK
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }
}

impl fmt::Display for VectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.level() == 0 {
            write!(f, "{}", self.0)
        } else {
            write!(f, "L{}:{}", self.level(), self.index())
        }
    }
}

/// A single finite f32 vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseVector(Vec<f32>);

impl DenseVector {
    pub fn new(components: Vec<f32>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::usage("vector must have at least one component"));
        }
        if let Some(pos) = components.iter().position(|c| !c.is_finite()) {
            return Err(Error::usage(format!("component {pos} is not finite")));
        }
        Ok(DenseVector(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

impl AsRef<[f32]> for DenseVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Row-major block of `(VectorId, vector)` pairs sharing one dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorSet {
    dim: usize,
    ids: Vec<VectorId>,
    data: Vec<f32>,
}

impl VectorSet {
    pub fn new(dim: usize) -> Self {
        VectorSet { dim, ids: Vec::new(), data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        VectorSet { dim, ids: Vec::with_capacity(n), data: Vec::with_capacity(n * dim) }
    }

    pub fn from_parts(dim: usize, ids: Vec<VectorId>, data: Vec<f32>) -> Result<Self> {
        if ids.len() * dim != data.len() {
            return Err(Error::usage(format!(
                "{} ids with dim {dim} need {} floats, got {}",
                ids.len(),
                ids.len() * dim,
                data.len()
            )));
        }
        Ok(VectorSet { dim, ids, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[VectorId] {
        &self.ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn id(&self, i: usize) -> VectorId {
        self.ids[i]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, id: VectorId, v: &[f32]) {
        debug_assert_eq!(v.len(), self.dim);
        self.ids.push(id);
        self.data.extend_from_slice(v);
    }

    pub fn iter(&self) -> impl Iterator<Item = (VectorId, &[f32])> + '_ {
        self.ids.iter().copied().zip(self.data.chunks_exact(self.dim.max(1)))
    }

    /// Copy the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> VectorSet {
        let mut out = VectorSet::with_capacity(self.dim, indices.len());
        for &i in indices {
            out.push(self.ids[i], self.row(i));
        }
        out
    }

    pub fn to_dense(&self) -> Vec<DenseVector> {
        self.data
            .chunks_exact(self.dim.max(1))
            .map(|c| DenseVector(c.to_vec()))
            .collect()
    }
}

/// Distance function; smaller is always closer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DistanceMetric {
    /// Squared Euclidean distance. Never square-rooted.
    #[default]
    SquaredL2,
    /// `1 - cos(a, b)`; a zero-norm input counts as orthogonal (distance 1).
    Cosine,
    /// `-dot(a, b)`.
    NegInnerProduct,
}

impl DistanceMetric {
    #[inline]
    pub fn distance(self, a: &[f32], b: &[f32]) -> f32 {
        match self {
            DistanceMetric::SquaredL2 => squared_l2(a, b),
            DistanceMetric::NegInnerProduct => -dot(a, b),
            DistanceMetric::Cosine => {
                let na = dot(a, a);
                let nb = dot(b, b);
                if na == 0.0 || nb == 0.0 {
                    return 1.0;
                }
                1.0 - dot(a, b) / (na.sqrt() * nb.sqrt())
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceMetric::SquaredL2 => "l2",
            DistanceMetric::Cosine => "cosine",
            DistanceMetric::NegInnerProduct => "ip",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DistanceMetric::SquaredL2 => 0,
            DistanceMetric::Cosine => 1,
            DistanceMetric::NegInnerProduct => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DistanceMetric::SquaredL2),
            1 => Some(DistanceMetric::Cosine),
            2 => Some(DistanceMetric::NegInnerProduct),
            _ => None,
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "squaredl2" | "squared_l2" | "euclidean" => Ok(DistanceMetric::SquaredL2),
            "cosine" | "cos" => Ok(DistanceMetric::Cosine),
            "ip" | "mip" | "neginnerproduct" | "inner_product" => Ok(DistanceMetric::NegInnerProduct),
            other => Err(Error::usage(format!("unknown metric {other:?}"))),
        }
    }
}

// Eight independent lanes, summed in a fixed order at the end. The order is
// part of the contract: same inputs give bit-identical sums on every run.
const LANES: usize = 8;

#[inline]
fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0f32;
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        tail += d * d;
    }
    reduce(acc) + tail
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    reduce(acc) + tail
}

#[inline]
fn reduce(acc: [f32; LANES]) -> f32 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Checked distance between two vectors.
pub fn distance(a: &DenseVector, b: &DenseVector, metric: DistanceMetric) -> Result<f32> {
    if a.dim() != b.dim() {
        return Err(Error::usage(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(metric.distance(a.as_slice(), b.as_slice()))
}

/// Per-query search knobs. `m` is used unchanged at every non-root level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchParams {
    pub m: usize,
    pub k: usize,
    pub root_beam: usize,
}

impl SearchParams {
    /// `root_beam` defaults to `max(m, 64)`.
    pub fn new(m: usize, k: usize) -> Self {
        SearchParams { m, k, root_beam: m.max(64) }
    }

    pub fn with_root_beam(mut self, root_beam: usize) -> Self {
        self.root_beam = root_beam;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 {
            return Err(Error::usage("m and k must be positive"));
        }
        if self.k > self.m {
            return Err(Error::usage(format!("k ({}) must not exceed m ({})", self.k, self.m)));
        }
        if self.root_beam < self.m {
            return Err(Error::usage(format!(
                "root beam ({}) must be at least m ({})",
                self.root_beam, self.m
            )));
        }
        Ok(())
    }
}

/// A scored id. Serialized as 8-byte LE id followed by 4-byte LE distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub id: VectorId,
    pub distance: f32,
}

impl Candidate {
    pub const WIRE_SIZE: usize = 12;

    pub fn new(id: VectorId, distance: f32) -> Self {
        Candidate { id, distance }
    }

    /// Ascending distance, ties broken by ascending id.
    pub fn ordering(&self, other: &Candidate) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }

    pub fn to_bytes(&self) -> [u8; Self::WIRE_SIZE] {
        let mut out = [0u8; Self::WIRE_SIZE];
        out[..8].copy_from_slice(&self.id.0.to_le_bytes());
        out[8..].copy_from_slice(&self.distance.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8; Self::WIRE_SIZE]) -> Self {
        let id = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        let distance = f32::from_le_bytes(bytes[8..].try_into().unwrap());
        Candidate { id: VectorId(id), distance }
    }
}

/// Sort by (distance, id), drop repeated ids keeping the smallest distance,
/// and truncate to `limit`.
pub fn merge_candidates(mut cands: Vec<Candidate>, limit: usize) -> Vec<Candidate> {
    cands.sort_unstable_by(|a, b| a.id.cmp(&b.id).then(a.distance.total_cmp(&b.distance)));
    cands.dedup_by_key(|c| c.id);
    if cands.len() > limit {
        cands.select_nth_unstable_by(limit, Candidate::ordering);
        cands.truncate(limit);
    }
    cands.sort_unstable_by(Candidate::ordering);
    cands
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f32]) -> DenseVector {
        DenseVector::new(c.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let l2 = DistanceMetric::SquaredL2;
        assert_eq!(distance(&v(&[0., 0.]), &v(&[0., 0.]), l2).unwrap(), 0.0);
        assert_eq!(distance(&v(&[0., 0.]), &v(&[3., 4.]), l2).unwrap(), 25.0);
        assert_eq!(distance(&v(&[1., 0.]), &v(&[2., 0.]), DistanceMetric::Cosine).unwrap(), 0.0);
        assert_eq!(distance(&v(&[1., 2.]), &v(&[3., 4.]), DistanceMetric::NegInnerProduct).unwrap(), -11.0);
    }

    #[test]
    fn cosine_zero_norm_is_orthogonal() {
        assert_eq!(DistanceMetric::Cosine.distance(&[0., 0.], &[1., 2.]), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let err = distance(&v(&[1.]), &v(&[1., 2.]), DistanceMetric::SquaredL2).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(DenseVector::new(vec![1.0, f32::NAN]).is_err());
        assert!(DenseVector::new(vec![]).is_err());
    }

    #[test]
    fn long_vectors_match_naive_sum_closely() {
        let a: Vec<f32> = (0..131).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..131).map(|i| (i as f32 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
        let fast = DistanceMetric::SquaredL2.distance(&a, &b) as f64;
        assert!((naive - fast).abs() < 1e-4 * naive);
    }

    #[test]
    fn vector_id_levels_are_disjoint() {
        let a = VectorId::new(0, 5);
        let b = VectorId::new(1, 5);
        assert_ne!(a, b);
        assert_eq!(b.level(), 1);
        assert_eq!(b.index(), 5);
        assert_eq!(a.0, 5);
    }

    #[test]
    fn candidate_wire_size_is_twelve() {
        let c = Candidate::new(VectorId(0x0102_0304_0506_0708), 1.5);
        let bytes = c.to_bytes();
        assert_eq!(bytes.len(), 12);
        assert_eq!(&bytes[..8], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(Candidate::from_bytes(&bytes), c);
    }

    #[test]
    fn search_params_validation() {
        assert!(SearchParams::new(10, 5).validate().is_ok());
        assert!(SearchParams::new(4, 5).validate().is_err());
        assert!(SearchParams::new(10, 5).with_root_beam(3).validate().is_err());
        assert_eq!(SearchParams::new(256, 10).root_beam, 256);
        assert_eq!(SearchParams::new(16, 10).root_beam, 64);
    }

    #[test]
    fn merge_keeps_min_distance_per_id() {
        let c = |id, d| Candidate::new(VectorId(id), d);
        let merged = merge_candidates(vec![c(3, 2.0), c(1, 5.0), c(3, 1.0), c(2, 1.0)], 2);
        assert_eq!(merged, vec![c(2, 1.0), c(3, 1.0)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pair() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
            (1usize..40).prop_flat_map(|d| {
                (prop::collection::vec(-100f32..100., d), prop::collection::vec(-100f32..100., d))
            })
        }

        proptest! {
            #[test]
            fn symmetric_l2_and_cosine((a, b) in pair()) {
                for m in [DistanceMetric::SquaredL2, DistanceMetric::Cosine] {
                    prop_assert_eq!(m.distance(&a, &b), m.distance(&b, &a));
                    prop_assert!(m.distance(&a, &b).is_finite());
                }
                prop_assert_eq!(DistanceMetric::SquaredL2.distance(&a, &a), 0.0);
            }
        }
    }
}
