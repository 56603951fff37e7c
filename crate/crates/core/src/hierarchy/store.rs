//! Index directory layout:
//!
//! ```text
//! manifest.txt     key=value lines (see below)
//! root.graph       root proximity graph, graph file format
//! level-<i>.parts  partitions of clustered level i, partition file format,
//!                  in pid order
//! ```
//!
//! Manifest keys: `format` (always `hiervec-index-1`), `dim`, `metric`,
//! `levels`, `budget`, `seed`, `base_count`, and per level `density.<i>` and
//! `replication.<i>`. Lines are written in a fixed order so identical indexes
//! produce identical directories.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use super::{HierarchicalIndex, Level};
use crate::clustering::{read_partitions, write_partitions};
use crate::config::{parse_key_values, require};
use crate::error::{Error, Result};
use crate::graph::{read_graph, write_graph};
use crate::types::{DistanceMetric, VectorId};

const FORMAT: &str = "hiervec-index-1";

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.txt")
}

pub fn level_path(dir: &Path, level: usize) -> PathBuf {
    dir.join(format!("level-{level}.parts"))
}

pub fn root_path(dir: &Path) -> PathBuf {
    dir.join("root.graph")
}

pub fn save_index(index: &HierarchicalIndex, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(manifest_path(dir), manifest_text(index))?;
    write_graph(BufWriter::new(File::create(root_path(dir))?), &index.root)?;
    for (i, level) in index.levels.iter().enumerate() {
        write_partitions(BufWriter::new(File::create(level_path(dir, i))?), &level.partitions)?;
    }
    Ok(())
}

fn manifest_text(index: &HierarchicalIndex) -> String {
    let mut s = String::new();
    writeln!(s, "format={FORMAT}").unwrap();
    writeln!(s, "dim={}", index.dim).unwrap();
    writeln!(s, "metric={}", index.metric).unwrap();
    writeln!(s, "levels={}", index.levels.len()).unwrap();
    writeln!(s, "budget={}", index.budget).unwrap();
    writeln!(s, "seed={}", index.seed).unwrap();
    writeln!(s, "base_count={}", index.base_count).unwrap();
    for (i, l) in index.levels.iter().enumerate() {
        writeln!(s, "density.{i}={}", l.density).unwrap();
        writeln!(s, "replication.{i}={}", l.replication_factor).unwrap();
    }
    s
}

/// Header fields of an index directory, readable without loading partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexManifest {
    pub dim: usize,
    pub metric: DistanceMetric,
    pub levels: usize,
    pub budget: usize,
    pub seed: u64,
    pub base_count: usize,
    pub densities: Vec<f64>,
    pub replication: Vec<f64>,
}

impl IndexManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(manifest_path(dir.as_ref()))?;
        let kv = parse_key_values(&text)?;
        let format: String = require(&kv, "format")?;
        if format != FORMAT {
            return Err(Error::usage(format!("unsupported index format {format:?}")));
        }
        let levels: usize = require(&kv, "levels")?;
        let mut densities = Vec::with_capacity(levels);
        let mut replication = Vec::with_capacity(levels);
        for i in 0..levels {
            densities.push(require(&kv, &format!("density.{i}"))?);
            replication.push(require(&kv, &format!("replication.{i}"))?);
        }
        Ok(IndexManifest {
            dim: require(&kv, "dim")?,
            metric: require(&kv, "metric")?,
            levels,
            budget: require(&kv, "budget")?,
            seed: require(&kv, "seed")?,
            base_count: require(&kv, "base_count")?,
            densities,
            replication,
        })
    }
}

pub fn load_index(dir: impl AsRef<Path>) -> Result<HierarchicalIndex> {
    let dir = dir.as_ref();
    let m = IndexManifest::load(dir)?;
    let root = read_graph(BufReader::new(File::open(root_path(dir))?))?;
    if root.dim() != m.dim || root.metric() != m.metric {
        return Err(Error::usage("root graph does not match the manifest"));
    }
    let mut levels = Vec::with_capacity(m.levels);
    for i in 0..m.levels {
        let partitions = read_partitions(BufReader::new(File::open(level_path(dir, i))?), m.dim)?;
        for (j, p) in partitions.iter().enumerate() {
            if p.pid != VectorId::new(i as u8 + 1, j as u64) {
                return Err(Error::IndexCorruption { level: i, pid: p.pid });
            }
        }
        levels.push(Level { density: m.densities[i], replication_factor: m.replication[i], partitions });
    }
    Ok(HierarchicalIndex {
        dim: m.dim,
        metric: m.metric,
        levels,
        root,
        seed: m.seed,
        budget: m.budget,
        base_count: m.base_count,
    })
}
