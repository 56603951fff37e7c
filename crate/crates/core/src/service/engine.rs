use std::fs::File;
use std::io::{self, BufReader};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::wire::{read_frame, write_message, Message, PartitionResultRequest, StoreStats};
use crate::cluster::Placement;
use crate::error::{Error, Result};
use crate::graph::{graph_search, read_graph, ProximityGraph};
use crate::hierarchy::{root_path, HierarchicalIndex, IndexManifest};
use crate::types::{merge_candidates, Candidate, SearchParams, VectorId};

/// One request wave (one clustered level) of an engine query.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Wave {
    pub level: usize,
    /// Store nodes contacted in this wave.
    pub nodes: usize,
    pub request_bytes: usize,
    pub response_bytes: usize,
}

/// Query engine: holds the root graph and the store addresses, nothing else.
/// Any number of threads may call [`Engine::search`] at once.
pub struct Engine {
    root: ProximityGraph,
    levels: usize,
    placement: Placement,
    stores: Vec<String>,
    timeout: Duration,
    idle: Vec<Mutex<Vec<TcpStream>>>,
}

impl Engine {
    pub fn new(root: ProximityGraph, levels: usize, stores: Vec<String>, timeout: Duration) -> Result<Self> {
        let placement = Placement::new(stores.len(), [])?;
        if levels > u8::MAX as usize {
            return Err(Error::usage("too many levels"));
        }
        let idle = stores.iter().map(|_| Mutex::new(Vec::new())).collect();
        Ok(Engine { root, levels, placement, stores, timeout, idle })
    }

    pub fn from_index(index: &HierarchicalIndex, stores: Vec<String>, timeout: Duration) -> Result<Self> {
        Self::new(index.root().clone(), index.clustered_levels(), stores, timeout)
    }

    /// Restart from an index directory: reads only the manifest and the root
    /// graph.
    pub fn open(dir: impl AsRef<Path>, stores: Vec<String>, timeout: Duration) -> Result<Self> {
        let dir = dir.as_ref();
        let m = IndexManifest::load(dir)?;
        let root = read_graph(BufReader::new(File::open(root_path(dir))?))?;
        if root.dim() != m.dim {
            return Err(Error::usage("root graph does not match the manifest"));
        }
        Self::new(root, m.levels, stores, timeout)
    }

    pub fn node_count(&self) -> usize {
        self.stores.len()
    }

    pub fn clustered_levels(&self) -> usize {
        self.levels
    }

    /// Top-`k` search with one concurrent request wave per clustered level.
    pub fn search(&self, q: &[f32], params: &SearchParams) -> Result<(Vec<Candidate>, Vec<Wave>)> {
        params.validate()?;
        if q.len() != self.root.dim() {
            return Err(Error::usage(format!("query dim {} != index dim {}", q.len(), self.root.dim())));
        }
        if self.levels == 0 {
            return Ok((graph_search(&self.root, q, params.k, params.root_beam)?.0, Vec::new()));
        }
        let (mut top, _) = graph_search(&self.root, q, params.m, params.root_beam)?;
        let mut waves = Vec::with_capacity(self.levels);
        for level in (0..self.levels).rev() {
            let pids: Vec<VectorId> = top.iter().map(|c| c.id).collect();
            let groups = self.placement.group(&pids);
            let mut wave = Wave { level, nodes: groups.len(), ..Default::default() };
            let replies: Vec<Result<(Vec<Candidate>, usize, usize)>> = thread::scope(|s| {
                let handles: Vec<_> = groups
                    .into_iter()
                    .map(|(node, pids)| {
                        let req = Message::GetPartitionResult(PartitionResultRequest {
                            level: level as u8,
                            m: params.m as u32,
                            query: q.to_vec(),
                            pids,
                        });
                        s.spawn(move || self.call(node, &req))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("request thread panicked")).collect()
            });
            let mut pool = Vec::new();
            for r in replies {
                let (cands, sent, received) = r?;
                wave.request_bytes += sent;
                wave.response_bytes += received;
                if cands.len() > params.m || cands.windows(2).any(|w| w[0].ordering(&w[1]).is_gt()) {
                    return Err(Error::Protocol("store returned an unsorted or oversized result".into()));
                }
                pool.extend(cands);
            }
            top = merge_candidates(pool, params.m);
            waves.push(wave);
        }
        top.truncate(params.k);
        Ok((top, waves))
    }

    /// Counters of every store node, in node order.
    pub fn store_stats(&self) -> Result<Vec<StoreStats>> {
        (0..self.stores.len())
            .map(|node| match self.roundtrip(node, &Message::Stats)? {
                (Message::StatsReply(s), _, _) => Ok(s),
                (other, _, _) => Err(unexpected(&other)),
            })
            .collect()
    }

    /// PING every store node.
    pub fn ping(&self) -> Result<()> {
        for node in 0..self.stores.len() {
            match self.roundtrip(node, &Message::Ping(b"hi".to_vec()))? {
                (Message::Pong(b), _, _) if b == b"hi" => {}
                (other, _, _) => return Err(unexpected(&other)),
            }
        }
        Ok(())
    }

    fn call(&self, node: usize, req: &Message) -> Result<(Vec<Candidate>, usize, usize)> {
        match self.roundtrip(node, req)? {
            (Message::PartitionResult(c), sent, received) => Ok((c, sent, received)),
            (other, _, _) => Err(unexpected(&other)),
        }
    }

    fn roundtrip(&self, node: usize, msg: &Message) -> Result<(Message, usize, usize)> {
        let node_err = |source: io::Error| Error::Node { node, addr: self.stores[node].clone(), source };
        let pooled = self.idle[node].lock().unwrap().pop();
        let mut stream = match pooled {
            Some(s) => s,
            None => self.connect(node).map_err(node_err)?,
        };
        let sent = write_message(&mut stream, msg).map_err(|e| wrap(e, node_err))?;
        let body = read_frame(&mut stream)
            .map_err(|e| wrap(e, node_err))?
            .ok_or_else(|| node_err(io::Error::new(io::ErrorKind::UnexpectedEof, "connection closed")))?;
        let reply = Message::decode(&body)?;
        if let Message::Error(e) = reply {
            return Err(Error::Remote { code: e.code, pid: e.pid, message: e.message });
        }
        self.idle[node].lock().unwrap().push(stream);
        Ok((reply, sent, body.len() + 4))
    }

    fn connect(&self, node: usize) -> io::Result<TcpStream> {
        let mut last = io::Error::new(io::ErrorKind::InvalidInput, "address resolved to nothing");
        for addr in self.stores[node].to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(s) => {
                    s.set_read_timeout(Some(self.timeout))?;
                    s.set_write_timeout(Some(self.timeout))?;
                    s.set_nodelay(true)?;
                    return Ok(s);
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

fn wrap(e: Error, node_err: impl Fn(io::Error) -> Error) -> Error {
    match e {
        Error::Io(io) => node_err(io),
        other => other,
    }
}

fn unexpected(m: &Message) -> Error {
    Error::Protocol(format!("unexpected reply opcode 0x{:02x}", m.opcode()))
}
