//! Graph file layout, all integers little-endian:
//!
//! ```text
//! header     dim u32 | n u64 | R u32 | metric u8 | entry u64
//! nodes      n × (id u64, dim × f32)
//! adjacency  n × (count u32, R × u32)   unused slots hold u32::MAX
//! ```
//!
//! Metric codes: 0 = squared L2, 1 = cosine, 2 = negative inner product.

use std::io::{Read, Write};

use super::ProximityGraph;
use crate::error::{Error, Result};
use crate::types::{DistanceMetric, VectorId, VectorSet};

const HEADER: usize = 4 + 8 + 4 + 1 + 8;

pub fn write_graph(mut w: impl Write, g: &ProximityGraph) -> Result<()> {
    let r = g.max_degree();
    let mut buf = Vec::with_capacity(HEADER + g.len() * (8 + 4 * g.dim() + 4 + 4 * r));
    buf.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(g.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(r as u32).to_le_bytes());
    buf.push(g.metric().code());
    buf.extend_from_slice(&(g.entry() as u64).to_le_bytes());
    for (id, row) in g.nodes().iter() {
        buf.extend_from_slice(&id.to_le_bytes());
        for x in row {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    for i in 0..g.len() {
        let nb = g.neighbors(i);
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        for slot in 0..r {
            buf.extend_from_slice(&nb.get(slot).copied().unwrap_or(u32::MAX).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("truncated graph file: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_graph(mut r: impl Read) -> Result<ProximityGraph> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    let dim = c.u32()? as usize;
    let n = c.u64()? as usize;
    let degree = c.u32()? as usize;
    let code = c.take(1)?[0];
    let metric = DistanceMetric::from_code(code).ok_or_else(|| Error::format(16, format!("unknown metric code {code}")))?;
    let entry = c.u64()?;
    if dim == 0 {
        return Err(Error::format(0, "dim must be positive"));
    }
    let need = n
        .checked_mul(8 + 4 * dim + 4 + 4 * degree)
        .filter(|&b| b <= bytes.len() - HEADER)
        .ok_or_else(|| Error::format(HEADER as u64, format!("file too short for {n} nodes")))?;
    debug_assert!(need <= bytes.len());

    let mut nodes = VectorSet::with_capacity(dim, n);
    let mut row = vec![0f32; dim];
    for _ in 0..n {
        let id = VectorId(c.u64()?);
        for (x, ch) in row.iter_mut().zip(c.take(4 * dim)?.chunks_exact(4)) {
            *x = f32::from_le_bytes(ch.try_into().unwrap());
        }
        nodes.push(id, &row);
    }
    let mut adjacency = Vec::with_capacity(n);
    for i in 0..n {
        let at = c.pos as u64;
        let count = c.u32()? as usize;
        if count > degree {
            return Err(Error::format(at, format!("node {i} has {count} neighbors, R is {degree}")));
        }
        let mut list = Vec::with_capacity(count);
        for slot in 0..degree {
            let v = c.u32()?;
            if slot < count {
                list.push(v);
            }
        }
        adjacency.push(list);
    }
    if c.pos != bytes.len() {
        return Err(Error::format(c.pos as u64, "trailing bytes after adjacency table"));
    }
    if entry >= n.max(1) as u64 {
        return Err(Error::format(17, format!("entry {entry} out of range")));
    }
    ProximityGraph::from_parts(nodes, metric, degree, entry as u32, adjacency)
        .map_err(|e| Error::format(HEADER as u64, e.to_string()))
}
