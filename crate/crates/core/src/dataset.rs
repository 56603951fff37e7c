//! Vector datasets: the `fvecs`/`bvecs`/`ivecs` file formats, seeded
//! sampling, synthetic Gaussian mixtures and exact brute-force ground truth.
//!
//! All three formats are a sequence of records, each a 4-byte little-endian
//! signed dimension `d` followed by `d` elements: 4-byte LE `f32` (fvecs),
//! one unsigned byte (bvecs) or 4-byte LE `i32` (ivecs). Every record in a
//! file must share `d`. Byte and integer elements are widened to `f32`
//! without scaling.
//!
//! Random streams come from ChaCha8 seeded with a 64-bit seed, which is
//! portable across platforms.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::topk::TopK;
use crate::types::{Candidate, DenseVector, DistanceMetric, VectorId, VectorSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VectorFormat {
    Fvecs,
    Bvecs,
    Ivecs,
}

impl VectorFormat {
    fn elem_size(self) -> usize {
        match self {
            VectorFormat::Bvecs => 1,
            VectorFormat::Fvecs | VectorFormat::Ivecs => 4,
        }
    }

    /// Guess from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

impl FromStr for VectorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fvecs" => Ok(VectorFormat::Fvecs),
            "bvecs" => Ok(VectorFormat::Bvecs),
            "ivecs" => Ok(VectorFormat::Ivecs),
            other => Err(Error::usage(format!("unknown vector format {other:?}"))),
        }
    }
}

/// A base or query set. Ids are `0..n` at level 0; `original_ids` maps back
/// to the source set after [`sample`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub metric: DistanceMetric,
    vectors: VectorSet,
    original_ids: Option<Vec<VectorId>>,
}

impl Dataset {
    /// Wrap row-major data; ids are assigned `0..n`.
    pub fn from_rows(dim: usize, data: Vec<f32>, metric: DistanceMetric) -> Result<Self> {
        if dim == 0 && !data.is_empty() {
            return Err(Error::usage("dim must be positive"));
        }
        if let Some(pos) = data.iter().position(|c| !c.is_finite()) {
            return Err(Error::usage(format!("component {pos} is not finite")));
        }
        let n = if dim == 0 { 0 } else { data.len() / dim };
        let ids = (0..n as u64).map(|i| VectorId::new(0, i)).collect();
        Ok(Dataset { metric, vectors: VectorSet::from_parts(dim, ids, data)?, original_ids: None })
    }

    pub fn from_vectors(vectors: &[DenseVector], metric: DistanceMetric) -> Result<Self> {
        let dim = vectors.first().map_or(0, DenseVector::dim);
        let mut data = Vec::with_capacity(dim * vectors.len());
        for v in vectors {
            if v.dim() != dim {
                return Err(Error::usage("vectors differ in dimension"));
            }
            data.extend_from_slice(v.as_slice());
        }
        Dataset::from_rows(dim, data, metric)
    }

    /// Zero for an empty set loaded from an empty file.
    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &VectorSet {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.vectors.row(i)
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.metric = metric;
        self
    }

    /// Original id of row `i` (identity unless the set was sampled).
    pub fn original_id(&self, i: usize) -> VectorId {
        match &self.original_ids {
            Some(map) => map[i],
            None => self.vectors.id(i),
        }
    }

    pub fn to_dense(&self) -> Vec<DenseVector> {
        self.vectors.to_dense()
    }

    /// First `n` rows as queries, the rest as a new base set.
    pub fn split_off_queries(&self, n: usize) -> Result<(Dataset, Vec<DenseVector>)> {
        if n > self.len() {
            return Err(Error::usage("more queries than vectors"));
        }
        let dim = self.dim();
        let queries = self.vectors.data()[..n * dim]
            .chunks_exact(dim.max(1))
            .map(|c| DenseVector::new(c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let rest = Dataset::from_rows(dim, self.vectors.data()[n * dim..].to_vec(), self.metric)?;
        Ok((rest, queries))
    }
}

pub fn load_vectors(path: impl AsRef<Path>, format: VectorFormat) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    read_vectors(BufReader::new(file), format)
}

pub fn read_vectors(mut reader: impl Read, format: VectorFormat) -> Result<Dataset> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let (dim, data) = parse_records(&bytes, format)?;
    if let Some(pos) = data.iter().position(|c| !c.is_finite()) {
        let rec = (pos / dim.max(1)) as u64;
        let offset = rec * (4 + (dim * format.elem_size()) as u64);
        return Err(Error::format(offset, "non-finite component"));
    }
    Dataset::from_rows(dim, data, DistanceMetric::default())
}

fn parse_records(bytes: &[u8], format: VectorFormat) -> Result<(usize, Vec<f32>)> {
    let mut pos = 0usize;
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(Error::format(pos as u64, "truncated dimension header"));
        }
        let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        if d <= 0 {
            return Err(Error::format(pos as u64, format!("non-positive dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => {
                dim = Some(d);
                let rec = 4 + d * format.elem_size();
                data.reserve(bytes.len() / rec * d);
            }
            Some(expected) if expected != d => {
                return Err(Error::format(
                    pos as u64,
                    format!("dimension {d} differs from first record's {expected}"),
                ));
            }
            _ => {}
        }
        pos += 4;
        let body = d * format.elem_size();
        if bytes.len() - pos < body {
            return Err(Error::format(
                bytes.len() as u64,
                format!("record at {} truncated: need {body} bytes, have {}", pos - 4, bytes.len() - pos),
            ));
        }
        let rec = &bytes[pos..pos + body];
        match format {
            VectorFormat::Fvecs => {
                data.extend(rec.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())))
            }
            VectorFormat::Ivecs => data
                .extend(rec.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap()) as f32)),
            VectorFormat::Bvecs => data.extend(rec.iter().map(|&b| b as f32)),
        }
        pos += body;
    }
    Ok((dim.unwrap_or(0), data))
}

pub fn write_vectors(mut writer: impl Write, ds: &Dataset, format: VectorFormat) -> Result<()> {
    let dim = ds.dim();
    let header = (dim as i32).to_le_bytes();
    let mut buf = Vec::with_capacity(4 + dim * format.elem_size());
    for (_, row) in ds.vectors.iter() {
        buf.clear();
        buf.extend_from_slice(&header);
        match format {
            VectorFormat::Fvecs => row.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            VectorFormat::Bvecs => {
                for &x in row {
                    if x.fract() != 0.0 || !(0.0..=255.0).contains(&x) {
                        return Err(Error::usage(format!("{x} is not representable as a byte")));
                    }
                    buf.push(x as u8);
                }
            }
            VectorFormat::Ivecs => {
                for &x in row {
                    if x.fract() != 0.0 || x.abs() > 16_777_216.0 {
                        return Err(Error::usage(format!("{x} is not an exactly representable integer")));
                    }
                    buf.extend_from_slice(&(x as i32).to_le_bytes());
                }
            }
        }
        writer.write_all(&buf)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn save_vectors(path: impl AsRef<Path>, ds: &Dataset, format: VectorFormat) -> Result<()> {
    write_vectors(BufWriter::new(File::create(path)?), ds, format)
}

/// Rows of exact integers (ground-truth id lists), ivecs layout.
pub fn write_ivecs_rows(mut writer: impl Write, rows: &[Vec<i32>]) -> Result<()> {
    for row in rows {
        writer.write_all(&(row.len() as i32).to_le_bytes())?;
        for x in row {
            writer.write_all(&x.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_ivecs_rows(mut reader: impl Read) -> Result<Vec<Vec<i32>>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let mut rows = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(Error::format(pos as u64, "truncated dimension header"));
        }
        let d = i32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        if d < 0 {
            return Err(Error::format(pos as u64, format!("negative row length {d}")));
        }
        pos += 4;
        let body = d as usize * 4;
        if bytes.len() - pos < body {
            return Err(Error::format(bytes.len() as u64, "truncated row"));
        }
        rows.push(
            bytes[pos..pos + body]
                .chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
        pos += body;
    }
    Ok(rows)
}

/// Uniform sample without replacement; ids relabeled `0..n`.
pub fn sample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::usage(format!("cannot sample {n} of {} vectors", ds.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, ds.len(), n).into_vec();
    let dim = ds.dim();
    let mut data = Vec::with_capacity(n * dim);
    let mut original = Vec::with_capacity(n);
    for &i in &picked {
        data.extend_from_slice(ds.row(i));
        original.push(ds.original_id(i));
    }
    let mut out = Dataset::from_rows(dim, data, ds.metric)?;
    out.original_ids = Some(original);
    Ok(out)
}

/// Exact per-query neighbor lists, ascending by (distance, id).
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub rows: Vec<Vec<Candidate>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self, q: usize) -> Vec<VectorId> {
        self.rows[q].iter().map(|c| c.id).collect()
    }

    /// Shortest row length, i.e. the largest k this truth supports.
    pub fn depth(&self) -> usize {
        self.rows.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Write ids as ivecs and distances as fvecs.
    pub fn save(&self, ids_path: impl AsRef<Path>, dist_path: impl AsRef<Path>) -> Result<()> {
        let ids: Vec<Vec<i32>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|c| c.id.0 as i32).collect())
            .collect();
        write_ivecs_rows(BufWriter::new(File::create(ids_path)?), &ids)?;
        let mut w = BufWriter::new(File::create(dist_path)?);
        for r in &self.rows {
            w.write_all(&(r.len() as i32).to_le_bytes())?;
            for c in r {
                w.write_all(&c.distance.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(ids_path: impl AsRef<Path>, dist_path: impl AsRef<Path>) -> Result<Self> {
        let ids = read_ivecs_rows(BufReader::new(File::open(ids_path)?))?;
        let dists = read_ivecs_rows(BufReader::new(File::open(dist_path)?))?;
        if ids.len() != dists.len() {
            return Err(Error::format(0, "id and distance files disagree on query count"));
        }
        let rows = ids
            .into_iter()
            .zip(dists)
            .map(|(i, d)| {
                if i.len() != d.len() {
                    return Err(Error::format(0, "id and distance rows differ in length"));
                }
                Ok(i.into_iter()
                    .zip(d)
                    .map(|(id, bits)| Candidate::new(VectorId(id as u64), f32::from_bits(bits as u32)))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(GroundTruth { rows })
    }
}

/// Exact top-k under `ds.metric`, ties broken by ascending id.
pub fn brute_force_topk(ds: &Dataset, queries: &[DenseVector], k: usize) -> Result<GroundTruth> {
    if k > ds.len() {
        return Err(Error::usage(format!("k = {k} exceeds dataset size {}", ds.len())));
    }
    if let Some(q) = queries.iter().find(|q| q.dim() != ds.dim()) {
        return Err(Error::usage(format!("query dim {} vs dataset dim {}", q.dim(), ds.dim())));
    }
    let rows = queries
        .par_iter()
        .map(|q| {
            let mut top = TopK::new(k);
            for (id, row) in ds.vectors.iter() {
                top.push(id, ds.metric.distance(q.as_slice(), row));
            }
            top.into_sorted()
        })
        .collect();
    Ok(GroundTruth { rows })
}

/// Gaussian mixture: `clusters` centers uniform in `[0,1]^dim`, points drawn
/// around a uniformly chosen center with per-axis standard deviation `spread`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureSpec {
    pub dim: usize,
    pub clusters: usize,
    pub spread: f32,
    pub seed: u64,
}

impl MixtureSpec {
    const CENTER_STREAM: u64 = 0;
    pub const BASE_STREAM: u64 = 1;
    pub const QUERY_STREAM: u64 = 2;

    pub fn new(dim: usize, clusters: usize, spread: f32, seed: u64) -> Self {
        MixtureSpec { dim, clusters, spread, seed }
    }

    /// The desk-scale stand-in for SIFT-like corpora used by the examples and
    /// acceptance suite: 64 dimensions, 512 overlapping clusters.
    pub fn sift_like(seed: u64) -> Self {
        MixtureSpec::new(64, 512, 0.25, seed)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn centers(&self) -> Vec<Vec<f32>> {
        let mut rng = self.rng(Self::CENTER_STREAM);
        (0..self.clusters)
            .map(|_| (0..self.dim).map(|_| rng.random::<f32>()).collect())
            .collect()
    }

    /// `n` points from random stream `stream`, row-major.
    pub fn points(&self, n: usize, stream: u64) -> Vec<f32> {
        let centers = self.centers();
        let mut rng = self.rng(stream);
        let mut data = Vec::with_capacity(n * self.dim);
        for _ in 0..n {
            let c = &centers[rng.random_range(0..self.clusters)];
            for &x in c {
                let z: f32 = StandardNormal.sample(&mut rng);
                data.push(x + self.spread * z);
            }
        }
        data
    }

    pub fn dataset(&self, n: usize, metric: DistanceMetric) -> Result<Dataset> {
        self.validate()?;
        Dataset::from_rows(self.dim, self.points(n, Self::BASE_STREAM), metric)
    }

    pub fn queries(&self, n: usize) -> Result<Vec<DenseVector>> {
        self.validate()?;
        self.points(n, Self::QUERY_STREAM)
            .chunks_exact(self.dim)
            .map(|c| DenseVector::new(c.to_vec()))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.clusters == 0 {
            return Err(Error::usage("dim and clusters must be at least 1"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::usage("spread must be finite and non-negative"));
        }
        Ok(())
    }
}

pub fn generate_synthetic(n: usize, dim: usize, clusters: usize, spread: f32, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::usage("n must be at least 1"));
    }
    MixtureSpec::new(dim, clusters, spread, seed).dataset(n, DistanceMetric::SquaredL2)
}

/// `key=value` description of a dataset file, one pair per line; `#` starts
/// a comment. Relative paths resolve against the manifest's directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub path: PathBuf,
    pub format: VectorFormat,
    pub metric: DistanceMetric,
    pub dim: Option<usize>,
}

impl DatasetManifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let kv = crate::config::parse_key_values(text)?;
        let path = kv.get("path").ok_or_else(|| Error::usage("manifest missing `path`"))?;
        let path = base_dir.join(path);
        let format = match kv.get("format") {
            Some(f) => f.parse()?,
            None => VectorFormat::from_path(&path)
                .ok_or_else(|| Error::usage("manifest missing `format`"))?,
        };
        let metric = kv.get("metric").map(|m| m.parse()).transpose()?.unwrap_or_default();
        let dim = kv
            .get("dim")
            .map(|d| d.parse::<usize>().map_err(|e| Error::usage(format!("bad dim: {e}"))))
            .transpose()?;
        Ok(DatasetManifest { path, format, metric, dim })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        DatasetManifest::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn open(&self) -> Result<Dataset> {
        let ds = load_vectors(&self.path, self.format)?.with_metric(self.metric);
        if let Some(d) = self.dim {
            if !ds.is_empty() && ds.dim() != d {
                return Err(Error::usage(format!("manifest dim {d} but file has dim {}", ds.dim())));
            }
        }
        Ok(ds)
    }
}
