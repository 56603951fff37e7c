//! Closed-loop discrete-event replay of simulated query traces.
//!
//! Every node has four FIFO servers: network (requests in and responses out
//! share it), disk IOPS, disk bandwidth and CPU. A client issues a query,
//! waits for it, and immediately issues the next one. A query runs its root
//! search on one node's CPU (round-robin), then each level's per-node
//! requests pass through network, disk IOPS (plus the fixed read latency),
//! disk bandwidth, CPU and network again (plus the round trip), and the next
//! level starts when the slowest node answers. With enough clients the
//! hottest server saturates and the completion rate is the peak throughput.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::sim::{NodeWork, QueryCostReport};
use super::ClusterModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesConfig {
    /// Concurrent closed-loop clients; 0 means `32 × node_count`.
    pub clients: usize,
    /// Completions to simulate, including warm-up.
    pub completions: usize,
    /// Completions discarded before measuring.
    pub warmup: usize,
}

impl Default for DesConfig {
    fn default() -> Self {
        DesConfig { clients: 0, completions: 6000, warmup: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesResult {
    pub qps: f64,
    pub mean_latency_us: f64,
    /// Busy fraction of each node's servers over the measured window:
    /// `[network, disk_iops, disk_bandwidth, cpu]`.
    pub utilization: Vec<[f64; 4]>,
}

const NET: usize = 0;
const IOPS: usize = 1;
const DISK_BW: usize = 2;
const CPU: usize = 3;

#[derive(Clone, Copy, Default)]
struct Server {
    free_at: f64,
    busy: f64,
}

impl Server {
    fn serve(&mut self, t: f64, service: f64) -> f64 {
        let start = t.max(self.free_at);
        self.free_at = start + service;
        self.busy += service;
        self.free_at
    }
}

#[derive(Clone, Copy, Debug)]
enum Kind {
    Issue { client: usize },
    Level { job: usize },
    Stage { job: usize, work: usize, stage: u8 },
    NodeDone { job: usize },
}

#[derive(Clone, Copy, Debug)]
struct Event {
    t: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Event {
    // min-heap on (t, seq)
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.seq.cmp(&self.seq))
    }
}

struct Job {
    client: usize,
    query: usize,
    level: usize,
    pending: usize,
    started: f64,
}

struct Sim<'a> {
    model: &'a ClusterModel,
    servers: Vec<[Server; 4]>,
    heap: BinaryHeap<Event>,
    seq: u64,
    jobs: Vec<Job>,
    next_query: usize,
    next_root: usize,
}

impl Sim<'_> {
    fn push(&mut self, t: f64, kind: Kind) {
        self.seq += 1;
        self.heap.push(Event { t, seq: self.seq, kind });
    }

    fn secs_to_us(x: f64) -> f64 {
        x * 1e6
    }

    fn stage_time(&self, w: &NodeWork, stage: u8) -> (usize, f64) {
        let m = self.model;
        match stage {
            0 => (NET, Self::secs_to_us(w.request_bytes as f64 / m.net_bandwidth)),
            1 => (IOPS, Self::secs_to_us(w.partitions_read as f64 / m.disk_iops)),
            2 => (DISK_BW, Self::secs_to_us(w.bytes_read as f64 / m.disk_bandwidth)),
            3 => (CPU, Self::secs_to_us(w.distance_computations as f64 / m.cpu_rate)),
            _ => (NET, Self::secs_to_us(w.response_bytes as f64 / m.net_bandwidth)),
        }
    }
}

/// Run the closed loop over `reports` (cycled in order) and measure the
/// completion rate after warm-up.
pub fn simulate_closed_loop(reports: &[QueryCostReport], model: &ClusterModel, cfg: &DesConfig) -> Result<DesResult> {
    model.validate()?;
    if reports.is_empty() {
        return Err(Error::usage("need at least one query trace"));
    }
    if cfg.warmup >= cfg.completions {
        return Err(Error::usage("warm-up must be shorter than the run"));
    }
    if reports.iter().any(|r| r.per_node.len() != model.node_count) {
        return Err(Error::usage("traces were simulated for a different node count"));
    }
    let clients = if cfg.clients == 0 { 32 * model.node_count } else { cfg.clients };
    let mut sim = Sim {
        model,
        servers: vec![[Server::default(); 4]; model.node_count],
        heap: BinaryHeap::new(),
        seq: 0,
        jobs: Vec::new(),
        next_query: 0,
        next_root: 0,
    };
    for c in 0..clients {
        sim.push(0.0, Kind::Issue { client: c });
    }
    let mut done = 0usize;
    let mut window_start = 0.0;
    let mut busy_at_start = vec![[0.0f64; 4]; model.node_count];
    let mut latency_sum = 0.0;
    let mut last = 0.0;

    while let Some(ev) = sim.heap.pop() {
        let t = ev.t;
        match ev.kind {
            Kind::Issue { client } => {
                let query = sim.next_query % reports.len();
                sim.next_query += 1;
                let node = sim.next_root % model.node_count;
                sim.next_root += 1;
                let root_us = Sim::secs_to_us(reports[query].root_distance_computations as f64 / model.cpu_rate);
                let at = sim.servers[node][CPU].serve(t, root_us);
                sim.jobs.push(Job { client, query, level: 0, pending: 0, started: t });
                let job = sim.jobs.len() - 1;
                sim.push(at, Kind::Level { job });
            }
            Kind::Level { job } => {
                let (query, level) = (sim.jobs[job].query, sim.jobs[job].level);
                let levels = &reports[query].levels;
                if level == levels.len() {
                    done += 1;
                    if done == cfg.warmup {
                        window_start = t;
                        busy_at_start = sim.servers.iter().map(|s| s.map(|x| x.busy)).collect();
                    } else if done > cfg.warmup {
                        latency_sum += t - sim.jobs[job].started;
                        last = t;
                    }
                    if done == cfg.completions {
                        break;
                    }
                    let client = sim.jobs[job].client;
                    sim.push(t, Kind::Issue { client });
                    continue;
                }
                let works = levels[level].nodes.len();
                sim.jobs[job].pending = works;
                if works == 0 {
                    sim.jobs[job].level += 1;
                    sim.push(t, Kind::Level { job });
                }
                for work in 0..works {
                    sim.push(t, Kind::Stage { job, work, stage: 0 });
                }
            }
            Kind::Stage { job, work, stage } => {
                let j = &sim.jobs[job];
                let w = reports[j.query].levels[j.level].nodes[work];
                let (server, service) = sim.stage_time(&w, stage);
                let mut at = sim.servers[w.node][server].serve(t, service);
                match stage {
                    1 => at += model.disk_read_latency_us,
                    4 => at += model.rtt_us,
                    _ => {}
                }
                if stage < 4 {
                    sim.push(at, Kind::Stage { job, work, stage: stage + 1 });
                } else {
                    sim.push(at, Kind::NodeDone { job });
                }
            }
            Kind::NodeDone { job } => {
                sim.jobs[job].pending -= 1;
                if sim.jobs[job].pending == 0 {
                    sim.jobs[job].level += 1;
                    sim.push(t, Kind::Level { job });
                }
            }
        }
    }
    let measured = (done - cfg.warmup) as f64;
    let span = last - window_start;
    if measured <= 0.0 || !(span > 0.0) {
        return Err(Error::usage("simulation window is empty; every query is free under this model"));
    }
    let utilization = sim
        .servers
        .iter()
        .zip(&busy_at_start)
        .map(|(s, b)| {
            let mut u = [0.0; 4];
            for r in 0..4 {
                u[r] = ((s[r].busy - b[r]) / span).min(1.0);
            }
            u
        })
        .collect();
    Ok(DesResult { qps: measured / span * 1e6, mean_latency_us: latency_sum / measured, utilization })
}
