//! Frame layout: `len: u32 LE` (opcode + payload), `opcode: u8`, payload.
//!
//! | opcode | message | payload |
//! |---|---|---|
//! | 0x01 | GET_PARTITION_RESULT | level u8, m u32, dim u32, dim × f32, count u32, count × pid u64 |
//! | 0x02 | PING | opaque bytes |
//! | 0x03 | STATS | empty |
//! | 0x81 | partition result | count u32, count × (id u64, distance f32) |
//! | 0x82 | pong | the ping bytes |
//! | 0x83 | stats | five u64 counters |
//! | 0xFF | ERROR | code u16, pid u64 (`u64::MAX` if none), UTF-8 message |
//!
//! All integers and floats are little-endian.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::types::{Candidate, VectorId};

pub const MAX_FRAME: usize = 16 << 20;

pub const OP_GET_PARTITION_RESULT: u8 = 0x01;
pub const OP_PING: u8 = 0x02;
pub const OP_STATS: u8 = 0x03;
pub const OP_PARTITION_RESULT: u8 = 0x81;
pub const OP_PONG: u8 = 0x82;
pub const OP_STATS_REPLY: u8 = 0x83;
pub const OP_ERROR: u8 = 0xFF;

/// Error codes carried by ERROR frames.
pub const ERR_UNKNOWN_PID: u16 = 1;
pub const ERR_MALFORMED: u16 = 2;
pub const ERR_BAD_REQUEST: u16 = 3;

const NO_PID: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionResultRequest {
    /// Clustered level the pids belong to (0 = base partitions).
    pub level: u8,
    pub m: u32,
    pub query: Vec<f32>,
    pub pids: Vec<VectorId>,
}

/// Store counters, as returned by STATS.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub requests: u64,
    pub partitions_read: u64,
    pub vectors_scanned: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

impl StoreStats {
    /// `key=value` dump, one counter per line.
    pub fn to_text(&self) -> String {
        format!(
            "requests={}\npartitions_read={}\nvectors_scanned={}\nbytes_in={}\nbytes_out={}\n",
            self.requests, self.partitions_read, self.vectors_scanned, self.bytes_in, self.bytes_out
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorFrame {
    pub code: u16,
    pub pid: Option<VectorId>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    GetPartitionResult(PartitionResultRequest),
    Ping(Vec<u8>),
    Stats,
    PartitionResult(Vec<Candidate>),
    Pong(Vec<u8>),
    StatsReply(StoreStats),
    Error(ErrorFrame),
}

impl Message {
    pub fn opcode(&self) -> u8 {
        match self {
            Message::GetPartitionResult(_) => OP_GET_PARTITION_RESULT,
            Message::Ping(_) => OP_PING,
            Message::Stats => OP_STATS,
            Message::PartitionResult(_) => OP_PARTITION_RESULT,
            Message::Pong(_) => OP_PONG,
            Message::StatsReply(_) => OP_STATS_REPLY,
            Message::Error(_) => OP_ERROR,
        }
    }

    /// The whole frame, header included.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![0u8; 4];
        out.push(self.opcode());
        match self {
            Message::GetPartitionResult(r) => {
                out.push(r.level);
                out.extend(r.m.to_le_bytes());
                out.extend((r.query.len() as u32).to_le_bytes());
                for x in &r.query {
                    out.extend(x.to_le_bytes());
                }
                out.extend((r.pids.len() as u32).to_le_bytes());
                for p in &r.pids {
                    out.extend(p.to_le_bytes());
                }
            }
            Message::Ping(b) | Message::Pong(b) => out.extend(b),
            Message::Stats => {}
            Message::PartitionResult(c) => {
                out.extend((c.len() as u32).to_le_bytes());
                for x in c {
                    out.extend(x.to_bytes());
                }
            }
            Message::StatsReply(s) => {
                for v in [s.requests, s.partitions_read, s.vectors_scanned, s.bytes_in, s.bytes_out] {
                    out.extend(v.to_le_bytes());
                }
            }
            Message::Error(e) => {
                out.extend(e.code.to_le_bytes());
                out.extend(e.pid.map_or(NO_PID, |p| p.0).to_le_bytes());
                out.extend(e.message.as_bytes());
            }
        }
        let len = (out.len() - 4) as u32;
        out[..4].copy_from_slice(&len.to_le_bytes());
        out
    }

    /// Decode opcode + payload (the frame without its length prefix).
    pub fn decode(body: &[u8]) -> Result<Self> {
        let (&op, payload) = body.split_first().ok_or_else(|| Error::Protocol("empty frame".into()))?;
        let mut c = Cursor { buf: payload, pos: 0 };
        let msg = match op {
            OP_GET_PARTITION_RESULT => {
                let level = c.u8()?;
                let m = c.u32()?;
                let dim = c.u32()? as usize;
                c.need(dim.saturating_mul(4))?;
                let query = (0..dim).map(|_| c.f32()).collect::<Result<_>>()?;
                let count = c.u32()? as usize;
                c.need(count.saturating_mul(8))?;
                let pids = (0..count).map(|_| c.u64().map(VectorId)).collect::<Result<_>>()?;
                Message::GetPartitionResult(PartitionResultRequest { level, m, query, pids })
            }
            OP_PING => Message::Ping(c.rest().to_vec()),
            OP_PONG => Message::Pong(c.rest().to_vec()),
            OP_STATS => Message::Stats,
            OP_PARTITION_RESULT => {
                let count = c.u32()? as usize;
                c.need(count.saturating_mul(Candidate::WIRE_SIZE))?;
                let mut cands = Vec::with_capacity(count);
                for _ in 0..count {
                    let b: [u8; Candidate::WIRE_SIZE] = c.take(Candidate::WIRE_SIZE)?.try_into().unwrap();
                    cands.push(Candidate::from_bytes(&b));
                }
                Message::PartitionResult(cands)
            }
            OP_STATS_REPLY => Message::StatsReply(StoreStats {
                requests: c.u64()?,
                partitions_read: c.u64()?,
                vectors_scanned: c.u64()?,
                bytes_in: c.u64()?,
                bytes_out: c.u64()?,
            }),
            OP_ERROR => {
                let code = c.u16()?;
                let pid = c.u64()?;
                let message = String::from_utf8(c.rest().to_vec())
                    .map_err(|_| Error::Protocol("error message is not UTF-8".into()))?;
                Message::Error(ErrorFrame { code, pid: (pid != NO_PID).then_some(VectorId(pid)), message })
            }
            other => return Err(Error::Protocol(format!("unknown opcode 0x{other:02x}"))),
        };
        if c.pos != payload.len() {
            return Err(Error::Protocol(format!("{} trailing bytes after opcode 0x{op:02x}", payload.len() - c.pos)));
        }
        Ok(msg)
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn need(&self, n: usize) -> Result<()> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Protocol(format!("payload truncated at byte {}", self.pos)));
        }
        Ok(())
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        self.need(n)?;
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Write one frame; returns the bytes written.
pub fn write_message(mut w: impl Write, msg: &Message) -> Result<usize> {
    let frame = msg.encode();
    if frame.len() - 4 > MAX_FRAME {
        return Err(Error::Protocol(format!("frame of {} bytes exceeds the 16 MiB limit", frame.len() - 4)));
    }
    w.write_all(&frame)?;
    w.flush()?;
    Ok(frame.len())
}

/// Read the next frame body (opcode + payload). `Ok(None)` on a clean end
/// of stream before any header byte.
pub fn read_frame(mut r: impl Read) -> Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Protocol("stream ended inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_le_bytes(header) as usize;
    if len == 0 || len > MAX_FRAME {
        return Err(Error::Protocol(format!("frame length {len} outside 1..=16 MiB")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::Protocol("stream ended inside a frame".into()),
        _ => e.into(),
    })?;
    Ok(Some(body))
}

/// Read and decode the next frame.
pub fn read_message(r: impl Read) -> Result<Option<Message>> {
    read_frame(r)?.map(|b| Message::decode(&b)).transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn candidate() -> impl Strategy<Value = Candidate> {
        (any::<u64>(), -1e30f32..1e30).prop_map(|(id, d)| Candidate::new(VectorId(id), d))
    }

    fn message() -> impl Strategy<Value = Message> {
        prop_oneof![
            (any::<u8>(), any::<u32>(), prop::collection::vec(-1e6f32..1e6, 0..40), prop::collection::vec(any::<u64>(), 0..40))
                .prop_map(|(level, m, query, pids)| Message::GetPartitionResult(PartitionResultRequest {
                    level,
                    m,
                    query,
                    pids: pids.into_iter().map(VectorId).collect()
                })),
            prop::collection::vec(any::<u8>(), 0..64).prop_map(Message::Ping),
            Just(Message::Stats),
            prop::collection::vec(candidate(), 0..64).prop_map(Message::PartitionResult),
            prop::collection::vec(any::<u8>(), 0..64).prop_map(Message::Pong),
            any::<[u64; 5]>().prop_map(|c| Message::StatsReply(StoreStats {
                requests: c[0],
                partitions_read: c[1],
                vectors_scanned: c[2],
                bytes_in: c[3],
                bytes_out: c[4]
            })),
            (any::<u16>(), prop::option::of(0u64..u64::MAX), ".{0,40}")
                .prop_map(|(code, pid, message)| Message::Error(ErrorFrame { code, pid: pid.map(VectorId), message })),
        ]
    }

    proptest! {
        #[test]
        fn frames_round_trip(msg in message()) {
            let bytes = msg.encode();
            prop_assert_eq!(u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize, bytes.len() - 4);
            let back = read_message(&bytes[..]).unwrap().unwrap();
            prop_assert_eq!(&back, &msg);
            prop_assert_eq!(back.encode(), bytes);
        }

        #[test]
        fn response_payload_is_bounded(cands in prop::collection::vec(candidate(), 0..=512)) {
            let frame = Message::PartitionResult(cands).encode();
            prop_assert!(frame.len() - 5 <= 6148);
        }

        #[test]
        fn truncated_frames_are_rejected(msg in message(), cut in 1usize..8) {
            let bytes = msg.encode();
            if cut < bytes.len() {
                prop_assert!(read_message(&bytes[..bytes.len() - cut]).is_err());
            }
        }
    }

    #[test]
    fn sizes_match_the_cost_model() {
        let req = Message::GetPartitionResult(PartitionResultRequest {
            level: 0,
            m: 8,
            query: vec![0.0; 16],
            pids: vec![VectorId(1); 3],
        });
        assert_eq!(req.encode().len(), crate::hierarchy::search::request_bytes(16, 3));
        let resp = Message::PartitionResult(vec![Candidate::new(VectorId(1), 0.5); 7]);
        assert_eq!(resp.encode().len(), crate::hierarchy::search::response_bytes(7));
    }

    #[test]
    fn bad_frames() {
        assert!(read_message(&[0u8, 0, 0, 0][..]).is_err());
        assert!(read_message(&[1u8, 0, 0, 0, 0x42][..]).is_err());
        let huge = ((MAX_FRAME + 1) as u32).to_le_bytes();
        assert!(read_message(&huge[..]).is_err());
        assert!(read_message(&[2u8, 0, 0, 0, OP_STATS, 9][..]).is_err());
        assert!(read_message(&[][..]).unwrap().is_none());
    }
}
