use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use log::{debug, warn};

use super::wire::{
    read_frame, write_message, ErrorFrame, Message, PartitionResultRequest, StoreStats, ERR_BAD_REQUEST,
    ERR_MALFORMED, ERR_UNKNOWN_PID,
};
use crate::cluster::Placement;
use crate::clustering::{read_partitions, Partition};
use crate::error::{Error, Result};
use crate::hierarchy::{level_path, HierarchicalIndex, IndexManifest};
use crate::types::{merge_candidates, Candidate, DistanceMetric, VectorId};

/// The partitions one store node owns, held in memory after loading.
#[derive(Clone, Debug)]
pub struct StoreShard {
    dim: usize,
    metric: DistanceMetric,
    partitions: HashMap<VectorId, Partition>,
}

impl StoreShard {
    pub fn new(dim: usize, metric: DistanceMetric, partitions: impl IntoIterator<Item = Partition>) -> Result<Self> {
        let mut map = HashMap::new();
        for p in partitions {
            if p.members.dim() != dim {
                return Err(Error::usage(format!("partition {} has dim {}, shard dim {dim}", p.pid, p.members.dim())));
            }
            if map.insert(p.pid, p).is_some() {
                return Err(Error::usage("duplicate pid in shard"));
            }
        }
        Ok(StoreShard { dim, metric, partitions: map })
    }

    /// Partitions of `index` that `placement` assigns to `node`.
    pub fn from_index(index: &HierarchicalIndex, placement: &Placement, node: usize) -> Result<Self> {
        let parts = index
            .levels()
            .iter()
            .flat_map(|l| &l.partitions)
            .filter(|p| placement.node_of(p.pid) == node)
            .cloned();
        Self::new(index.dim(), index.metric(), parts)
    }

    /// Load this node's partitions from an index directory.
    pub fn open(dir: impl AsRef<Path>, node: usize, node_count: usize) -> Result<Self> {
        let dir = dir.as_ref();
        if node >= node_count {
            return Err(Error::usage(format!("node {node} out of range for {node_count} nodes")));
        }
        let m = IndexManifest::load(dir)?;
        let placement = Placement::new(node_count, [])?;
        let mut parts = Vec::new();
        for i in 0..m.levels {
            let level = read_partitions(BufReader::new(File::open(level_path(dir, i))?), m.dim)?;
            parts.extend(level.into_iter().filter(|p| placement.node_of(p.pid) == node));
        }
        Self::new(m.dim, m.metric, parts)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn contains(&self, pid: VectorId) -> bool {
        self.partitions.contains_key(&pid)
    }

    /// Scan the listed partitions and return the de-duplicated node-local
    /// top-`m` with the number of members scanned.
    pub fn handle(&self, req: &PartitionResultRequest) -> std::result::Result<(Vec<Candidate>, usize), ErrorFrame> {
        if req.query.len() != self.dim {
            return Err(ErrorFrame {
                code: ERR_BAD_REQUEST,
                pid: None,
                message: format!("query dim {} != shard dim {}", req.query.len(), self.dim),
            });
        }
        if req.m == 0 {
            return Err(ErrorFrame { code: ERR_BAD_REQUEST, pid: None, message: "m must be at least 1".into() });
        }
        let mut pool = Vec::new();
        for &pid in &req.pids {
            let part = self
                .partitions
                .get(&pid)
                .filter(|_| pid.level() as usize == req.level as usize + 1)
                .ok_or_else(|| ErrorFrame {
                    code: ERR_UNKNOWN_PID,
                    pid: Some(pid),
                    message: format!("partition {pid} not on this node at level {}", req.level),
                })?;
            for (id, v) in part.members.iter() {
                pool.push(Candidate::new(id, self.metric.distance(&req.query, v)));
            }
        }
        let scanned = pool.len();
        Ok((merge_candidates(pool, req.m as usize), scanned))
    }
}

#[derive(Default)]
struct Counters {
    requests: AtomicU64,
    partitions_read: AtomicU64,
    vectors_scanned: AtomicU64,
    bytes_in: AtomicU64,
    bytes_out: AtomicU64,
}

impl Counters {
    fn snapshot(&self) -> StoreStats {
        StoreStats {
            requests: self.requests.load(Ordering::Relaxed),
            partitions_read: self.partitions_read.load(Ordering::Relaxed),
            vectors_scanned: self.vectors_scanned.load(Ordering::Relaxed),
            bytes_in: self.bytes_in.load(Ordering::Relaxed),
            bytes_out: self.bytes_out.load(Ordering::Relaxed),
        }
    }
}

/// A running store node. Dropping it stops the accept loop.
pub struct StoreServer {
    addr: SocketAddr,
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl StoreServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> StoreStats {
        self.counters.snapshot()
    }

    /// Stop accepting connections and wait for the accept loop. Open
    /// connections finish their current frame and then see end of stream.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    /// Block until the accept loop exits (it only does after `shutdown`
    /// from another handle, so this serves forever).
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    fn stop_accepting(&mut self) {
        if let Some(h) = self.accept.take() {
            self.stop.store(true, Ordering::SeqCst);
            // wake the blocking accept
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
    }
}

impl Drop for StoreServer {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

/// Bind `addr` and serve `shard` on a background thread, one thread per
/// connection.
pub fn serve_store(shard: StoreShard, addr: impl ToSocketAddrs) -> Result<StoreServer> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let shard = Arc::new(shard);
    let counters = Arc::new(Counters::default());
    let stop = Arc::new(AtomicBool::new(false));
    let accept = {
        let (counters, stop) = (counters.clone(), stop.clone());
        thread::Builder::new().name(format!("store-{local}")).spawn(move || {
            for conn in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let (shard, counters) = (shard.clone(), counters.clone());
                        thread::spawn(move || {
                            if let Err(e) = serve_connection(&shard, &counters, stream) {
                                debug!("store connection closed: {e}");
                            }
                        });
                    }
                    Err(e) => warn!("accept failed: {e}"),
                }
            }
        })?
    };
    Ok(StoreServer { addr: local, counters, stop, accept: Some(accept) })
}

fn serve_connection(shard: &StoreShard, counters: &Counters, stream: TcpStream) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream.try_clone()?);
    loop {
        let body = match read_frame(&mut reader) {
            Ok(Some(b)) => b,
            Ok(None) => return Ok(()),
            Err(e) => return close_with_error(&mut writer, &stream, e),
        };
        counters.bytes_in.fetch_add(body.len() as u64 + 4, Ordering::Relaxed);
        let msg = match Message::decode(&body) {
            Ok(m) => m,
            Err(e) => return close_with_error(&mut writer, &stream, e),
        };
        let reply = match msg {
            Message::GetPartitionResult(req) => {
                counters.requests.fetch_add(1, Ordering::Relaxed);
                match shard.handle(&req) {
                    Ok((top, scanned)) => {
                        counters.partitions_read.fetch_add(req.pids.len() as u64, Ordering::Relaxed);
                        counters.vectors_scanned.fetch_add(scanned as u64, Ordering::Relaxed);
                        Message::PartitionResult(top)
                    }
                    Err(e) => Message::Error(e),
                }
            }
            Message::Ping(b) => Message::Pong(b),
            Message::Stats => Message::StatsReply(counters.snapshot()),
            other => Message::Error(ErrorFrame {
                code: ERR_MALFORMED,
                pid: None,
                message: format!("opcode 0x{:02x} is not a request", other.opcode()),
            }),
        };
        let n = write_message(&mut writer, &reply)?;
        counters.bytes_out.fetch_add(n as u64, Ordering::Relaxed);
    }
}

fn close_with_error(writer: &mut BufWriter<TcpStream>, stream: &TcpStream, e: Error) -> Result<()> {
    let frame = Message::Error(ErrorFrame { code: ERR_MALFORMED, pid: None, message: e.to_string() });
    let _ = write_message(writer, &frame);
    let _ = stream.shutdown(Shutdown::Both);
    Err(e)
}
