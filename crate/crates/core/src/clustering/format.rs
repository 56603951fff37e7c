//! Partition file layout, repeated per partition:
//!
//! ```text
//! pid           u64 LE
//! member_count  u32 LE
//! members       member_count × (id u64 LE, dim × f32 LE)
//! ```
//!
//! The dimension is not stored; readers get it from the index manifest.

use std::io::{Read, Write};

use super::Partition;
use crate::error::{Error, Result};
use crate::types::{VectorId, VectorSet};

pub fn write_partitions(mut w: impl Write, partitions: &[Partition]) -> Result<()> {
    let mut buf = Vec::new();
    for p in partitions {
        buf.clear();
        buf.extend_from_slice(&p.pid.to_le_bytes());
        buf.extend_from_slice(&(p.members.len() as u32).to_le_bytes());
        for (id, row) in p.members.iter() {
            buf.extend_from_slice(&id.to_le_bytes());
            for x in row {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_partitions(mut r: impl Read, dim: usize) -> Result<Vec<Partition>> {
    if dim == 0 {
        return Err(Error::usage("dim must be positive"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut out = Vec::new();
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if bytes.len() - *pos < n {
            return Err(Error::format(*pos as u64, format!("truncated: need {n} bytes")));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    while pos < bytes.len() {
        let pid = VectorId(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
        let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut members = VectorSet::with_capacity(dim, count);
        let mut row = vec![0f32; dim];
        for _ in 0..count {
            let id = VectorId(u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()));
            let body = take(&mut pos, 4 * dim)?;
            for (x, c) in row.iter_mut().zip(body.chunks_exact(4)) {
                *x = f32::from_le_bytes(c.try_into().unwrap());
            }
            members.push(id, &row);
        }
        out.push(Partition { pid, members });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_partitions() -> impl Strategy<Value = (usize, Vec<Partition>)> {
        (1usize..6).prop_flat_map(|dim| {
            let part = (any::<u64>(), prop::collection::vec((any::<u64>(), prop::collection::vec(-1e3f32..1e3, dim)), 0..5))
                .prop_map(move |(pid, ms)| {
                    let mut members = VectorSet::new(dim);
                    for (id, v) in ms {
                        members.push(VectorId(id), &v);
                    }
                    Partition { pid: VectorId(pid), members }
                });
            (Just(dim), prop::collection::vec(part, 0..6))
        })
    }

    proptest! {
        #[test]
        fn round_trip((dim, parts) in arb_partitions()) {
            let mut bytes = Vec::new();
            write_partitions(&mut bytes, &parts).unwrap();
            let expected: usize = parts.iter().map(Partition::encoded_len).sum();
            prop_assert_eq!(bytes.len(), expected);
            let back = read_partitions(&bytes[..], dim).unwrap();
            prop_assert_eq!(&back, &parts);
            let mut again = Vec::new();
            write_partitions(&mut again, &back).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }

    #[test]
    fn truncated_file_is_format_error() {
        let mut members = VectorSet::new(2);
        members.push(VectorId(1), &[1.0, 2.0]);
        let mut bytes = Vec::new();
        write_partitions(&mut bytes, &[Partition { pid: VectorId(9), members }]).unwrap();
        bytes.pop();
        assert!(matches!(read_partitions(&bytes[..], 2), Err(Error::Format { offset: 20, .. })));
    }
}
