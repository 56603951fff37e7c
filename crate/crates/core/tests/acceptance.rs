//! Acceptance run: ten numbered checks on synthetic corpora up to 10⁶
//! vectors, each scored against brute-force ground truth. Prints one
//! PASS/FAIL line per criterion and exits non-zero if any fail.
//!
//! Takes tens of minutes on one core; the million-vector graph baseline
//! dominates.

mod support;

use std::time::Instant;

use hiervec::cluster::{
    estimate_from_reports, measure_beta, node_loads, place, simulate_closed_loop, simulate_workload, ClusterModel,
    DesConfig, Resource,
};
use hiervec::clustering::PartitionDensity;
use hiervec::dataset::{brute_force_topk, sample, Dataset, GroundTruth, MixtureSpec};
use hiervec::graph::{build_graph, min_beam_for_recall, shard_and_measure, GraphParams, ProximityGraph};
use hiervec::hierarchy::{build_levels, save_index, search, BuildConfig, HierarchicalIndex};
use hiervec::profiler::{measure_cost_at_density, select_balanced_density, ProfileConfig};
use hiervec::service::wire::read_message;
use hiervec::service::{spawn_local_stores, store_addrs, Engine, Message, PartitionResultRequest, StoreShard, DEFAULT_TIMEOUT};
use hiervec::{Candidate, DenseVector, DistanceMetric, SearchParams, VectorId};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;
const N: usize = 1_000_000;
const QUERIES: usize = 1000;

struct Outcome {
    results: Vec<(u32, bool, String)>,
}

impl Outcome {
    fn record(&mut self, id: u32, pass: bool, detail: String) {
        println!("criterion {id:>2}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id, pass, detail));
    }
}

fn stage(what: &str, t: Instant) {
    println!("  [{:>7.1}s] {what}", t.elapsed().as_secs_f64());
}

fn main() {
    // libtest flags such as --list or a name filter: nothing to enumerate
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let t = Instant::now();
    let mut out = Outcome { results: Vec::new() };

    let spec = MixtureSpec::sift_like(SEED);
    let data = spec.dataset(N, DistanceMetric::SquaredL2).unwrap();
    let queries = spec.queries(QUERIES).unwrap();
    let truth = brute_force_topk(&data, &queries, 10).unwrap();
    stage("corpus and ground truth", t);

    density_curve(&mut out, &data, &queries);
    stage("density curve", t);
    height_laws(&mut out);
    stage("height laws", t);
    determinism(&mut out, &data);
    stage("determinism", t);

    let index = build_levels(&data, &BuildConfig::fixed(10_000, 0.1).unwrap()).unwrap();
    stage("hierarchy build", t);
    let hier = accuracy(&mut out, &index, &queries, &truth);
    stage("hierarchy evaluation", t);
    payload_bound(&mut out, &index);
    distributed(&mut out, &index, &queries);
    stage("distributed equivalence", t);
    throughput(&mut out, &index, &queries);
    stage("throughput models", t);
    drop(index);

    let graph = build_graph(data.vectors(), data.metric, &GraphParams::default()).unwrap();
    stage("flat graph build", t);
    graph_baselines(&mut out, &graph, &queries, &truth, hier);
    stage("graph baselines", t);

    out.results.sort_by_key(|r| r.0);
    println!("\nsummary ({:.0}s):", t.elapsed().as_secs_f64());
    for (id, pass, detail) in &out.results {
        println!("criterion {id:>2}: {} {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    let failed = out.results.iter().filter(|r| !r.1).count();
    println!("{} passed, {failed} failed", out.results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Criterion 1: accessed vectors at recall@5 = 0.9 for D = 1, 0.1, 0.01 on a
/// 10⁵ sample, with held-out queries.
fn density_curve(out: &mut Outcome, data: &Dataset, queries: &[DenseVector]) {
    let t = Instant::now();
    let s = sample(data, 100_000, SEED).unwrap();
    let q = &queries[..200];
    let truth = brute_force_topk(&s, q, 5).unwrap();
    let cfg = ProfileConfig::default();
    let cost = |d: f64| measure_cost_at_density(&s, PartitionDensity::new(d).unwrap(), q, &truth, &cfg).map(|p| p.accessed_vectors);
    match (cost(1.0), cost(0.1), cost(0.01)) {
        (Ok(c1), Ok(c01), Ok(c001)) => {
            let secs = t.elapsed().as_secs_f64();
            let (a, b) = (c01 / c1, c001 / c01);
            out.record(
                1,
                a <= 2.0 && b >= 2.5 && secs <= 900.0,
                format!("c(1)={c1:.0} c(0.1)={c01:.0} c(0.01)={c001:.0}; c(0.1)/c(1)={a:.2} (<=2.0), c(0.01)/c(0.1)={b:.2} (>=2.5), {secs:.0}s"),
            );
        }
        (a, b, c) => out.record(1, false, format!("cost measurement failed: {:?}", [a.err(), b.err(), c.err()])),
    }
    // not a numbered criterion; the profiler's pick on the same sample
    match select_balanced_density(&s, q, &truth, &cfg) {
        Ok(p) => println!("  info: profiler chose density {:.4} (fell_back={})", p.chosen.value(), p.fell_back),
        Err(e) => println!("  info: profiler failed: {e}"),
    }
}

/// Criterion 4: clustered levels against `ceil(log_{1/D}(n/budget))`, and
/// fetch rounds against the level count, for 20 random triples.
fn height_laws(out: &mut Outcome) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut bad = Vec::new();
    let mut heights = Vec::new();
    for i in 0..20 {
        let n = rng.random_range(500..20_000usize);
        let d: f64 = rng.random_range(0.05..0.5);
        let budget = rng.random_range((n / 1000).max(1)..=n);
        let ratio = (n as f64 / budget as f64).ln() / (1.0 / d).ln();
        let expected = if n <= budget { 0 } else { (ratio - 1e-9).ceil() as usize };
        let spec = MixtureSpec::new(8, 16, 0.1, i);
        let ds = spec.dataset(n, DistanceMetric::SquaredL2).unwrap();
        let idx = build_levels(&ds, &BuildConfig::fixed(budget, d).unwrap()).unwrap();
        let got = idx.clustered_levels();
        let params = SearchParams::new(16.min(n), 1);
        let rounds_ok = spec
            .queries(20)
            .unwrap()
            .iter()
            .all(|q| search(&idx, q.as_slice(), &params).unwrap().1.fetch_rounds() == got);
        heights.push(got);
        if got != expected || !rounds_ok {
            bad.push(format!("(n={n}, D={d:.3}, budget={budget}): levels {got} vs {expected}, rounds ok {rounds_ok}"));
        }
    }
    out.record(
        4,
        bad.is_empty(),
        if bad.is_empty() { format!("20/20 triples exact, heights {heights:?}") } else { bad.join("; ") },
    );
}

/// Criterion 10: identical seeds give identical index bytes; file, index
/// directory and wire formats round-trip.
fn determinism(out: &mut Outcome, data: &Dataset) {
    let s = sample(data, 100_000, SEED + 1).unwrap();
    let cfg = BuildConfig::fixed(1_000, 0.1).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = (0..2)
        .map(|i| {
            let dir = tmp.path().join(format!("run{i}"));
            save_index(&build_levels(&s, &cfg).unwrap(), &dir).unwrap();
            support::dir_bytes(&dir)
        })
        .collect();
    let identical = dirs[0] == dirs[1];
    let bytes: usize = dirs[0].iter().map(|f| f.1.len()).sum();
    let props = [
        ("dataset files", support::dataset_files(256)),
        ("index directories", support::index_dirs(64)),
        ("wire frames", support::wire_frames(1024)),
    ];
    let failures: Vec<String> = props.iter().filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}"))).collect();
    out.record(
        10,
        identical && failures.is_empty(),
        format!(
            "two builds of a 10^5 index {} ({bytes} bytes); property suites: {}",
            if identical { "byte-identical" } else { "DIFFER" },
            if failures.is_empty() { "all round-trip".to_string() } else { failures.join("; ") }
        ),
    );
}

struct HierPoint {
    recall: f64,
    scanned: f64,
}

/// Criteria 3 (hierarchy half) and 5.
fn accuracy(out: &mut Outcome, index: &HierarchicalIndex, queries: &[DenseVector], truth: &GroundTruth) -> HierPoint {
    let rows = hiervec::hierarchy::evaluate(index, queries, truth, &[64, 128, 256], 10).unwrap();
    for r in &rows {
        println!(
            "  m={} recall@10={:.4} scanned={:.0} rounds={} per-level={:?}",
            r.m, r.recall, r.mean_vectors_scanned, r.fetch_rounds, r.per_level_recall
        );
    }
    let monotone = rows.iter().all(|r| r.per_level_recall.windows(2).all(|w| w[1] <= w[0]));
    out.record(
        5,
        monotone,
        format!(
            "per-level recall root..level 0: {}",
            rows.iter().map(|r| format!("m={} {:?}", r.m, r.per_level_recall)).collect::<Vec<_>>().join(", ")
        ),
    );
    println!("  index: {} clustered levels, root {} vectors", index.clustered_levels(), index.root().len());
    let r = rows.last().unwrap();
    HierPoint { recall: r.recall, scanned: r.mean_vectors_scanned }
}

/// Criterion 6: reply payloads at m = 512 for random queries over random
/// sets of base partitions.
fn payload_bound(out: &mut Outcome, index: &HierarchicalIndex) {
    let parts = index.levels()[0].partitions.len() as u64;
    let shard = StoreShard::from_index(index, &place(index, 1).unwrap(), 0).unwrap();
    let dim = index.dim();
    let strategy = (prop::collection::vec(-0.5f32..1.5, dim), prop::collection::vec(0..parts, 1..64));
    let mut runner = TestRunner::new(Config { cases: 512, failure_persistence: None, ..Config::default() });
    let largest = std::cell::Cell::new(0usize);
    let full = std::cell::Cell::new(0usize);
    let result = runner.run(&strategy, |(query, pids)| {
        let req = PartitionResultRequest { level: 0, m: 512, query, pids: pids.into_iter().map(|j| VectorId::new(1, j)).collect() };
        let (cands, _) = shard.handle(&req).map_err(|e| TestCaseError::fail(e.message))?;
        let frame = Message::PartitionResult(cands).encode();
        let payload = frame.len() - 5;
        largest.set(largest.get().max(payload));
        full.set(full.get() + usize::from(payload == 4 + 512 * Candidate::WIRE_SIZE));
        prop_assert!(payload <= 6148, "payload {payload}");
        prop_assert!(matches!(read_message(&frame[..]), Ok(Some(Message::PartitionResult(_)))));
        Ok(())
    });
    out.record(
        6,
        result.is_ok(),
        match result {
            Ok(()) => format!("512 random requests, largest payload {} bytes (<=6148), {} at the full 512 candidates", largest.get(), full.get()),
            Err(e) => e.to_string(),
        },
    );
}

/// Criterion 7: engine over 1 and 5 loopback stores against local search.
fn distributed(out: &mut Outcome, index: &HierarchicalIndex, queries: &[DenseVector]) {
    let params = SearchParams::new(256, 10);
    let local: Vec<Vec<Candidate>> = queries.iter().map(|q| search(index, q.as_slice(), &params).unwrap().0).collect();
    let mut notes = Vec::new();
    let mut pass = true;
    for nodes in [1, 5] {
        let stores = spawn_local_stores(index, nodes).unwrap();
        let engine = Engine::from_index(index, store_addrs(&stores), DEFAULT_TIMEOUT).unwrap();
        let mut mismatches = 0;
        let mut max_fanout = 0;
        for (q, want) in queries.iter().zip(&local) {
            match engine.search(q.as_slice(), &params) {
                Ok((got, waves)) => {
                    max_fanout = waves.iter().map(|w| w.nodes).max().unwrap_or(0).max(max_fanout);
                    let same_ids = got.iter().map(|c| c.id).eq(want.iter().map(|c| c.id));
                    mismatches += usize::from(!same_ids);
                }
                Err(e) => {
                    notes.push(format!("{nodes} node(s): {e}"));
                    mismatches += 1;
                }
            }
        }
        pass &= mismatches == 0;
        notes.push(format!("{nodes} node(s): {mismatches}/{} differ, max fan-out {max_fanout}", queries.len()));
        for s in stores {
            s.shutdown();
        }
    }
    out.record(7, pass, notes.join("; "));
}

/// Criteria 8 and 9 on 5 nodes at m = 256.
fn throughput(out: &mut Outcome, index: &HierarchicalIndex, queries: &[DenseVector]) {
    let params = SearchParams::new(256, 10);
    let placement = place(index, 5).unwrap();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut beta_seen = None;
    for (name, model) in [("lsv3_like", ClusterModel::lsv3_like(5)), ("small_general", ClusterModel::small_general(5))] {
        let reports = simulate_workload(index, &placement, &model, queries, &params).unwrap();
        let beta = measure_beta(&node_loads(&reports)).unwrap();
        beta_seen.get_or_insert(beta);
        let est = estimate_from_reports(&reports, &model.with_beta(beta)).unwrap();
        let des = simulate_closed_loop(&reports, &model, &DesConfig::default()).unwrap();
        let gap = (est.qps - des.qps).abs() / des.qps;
        pass &= gap <= 0.15;
        let mut note = format!(
            "{name}: analytic {:.0} QPS vs simulated {:.0} ({:.1}% apart), binding {}",
            est.qps,
            des.qps,
            100.0 * gap,
            est.binding.as_str()
        );
        if name == "lsv3_like" {
            let (net, cpu) = (est.utilization_of(Resource::Network), est.utilization_of(Resource::Cpu));
            pass &= est.binding == Resource::DiskIops && net < 0.3 && cpu < 0.5;
            let read = est.demand.of(Resource::DiskBandwidth) / est.demand.of(Resource::DiskIops);
            note += &format!(
                ", iops {:.0}%, disk bw {:.0}%, net {:.0}%, cpu {:.0}%, {read:.0} bytes per partition read",
                100.0 * est.utilization_of(Resource::DiskIops),
                100.0 * est.utilization_of(Resource::DiskBandwidth),
                100.0 * net,
                100.0 * cpu
            );
        }
        notes.push(note);
    }
    out.record(8, pass, notes.join("; "));
    let beta = beta_seen.unwrap();
    out.record(9, beta <= 1.3, format!("beta {beta:.3} over {} queries on 5 nodes (<=1.3)", queries.len()));
}

/// Criteria 2 and 3 (graph half) on the flat million-vector graph.
fn graph_baselines(out: &mut Outcome, g: &ProximityGraph, queries: &[DenseVector], truth: &GroundTruth, hier: HierPoint) {
    match min_beam_for_recall(g, queries, truth, 5, 0.9, 5) {
        Ok(p) => {
            let probe = shard_and_measure(g, 5, queries, 5, p.beam, SEED).unwrap();
            let f = probe.cross_node_fraction();
            out.record(
                2,
                f >= 0.5,
                format!(
                    "beam {} (recall@5 {:.3}): {:.1} of {:.1} steps cross shards, fraction {f:.3} (>=0.5)",
                    p.beam, p.recall, probe.avg_cross_node_steps, probe.avg_steps
                ),
            );
        }
        Err(e) => out.record(2, false, format!("graph never reached recall@5 0.9: {e}")),
    }
    let recall_ok = hier.recall >= 0.9;
    match min_beam_for_recall(g, queries, truth, 10, hier.recall, 10) {
        Ok(p) => {
            let ratio = hier.scanned / p.mean_distance_computations;
            out.record(
                3,
                recall_ok && ratio <= 3.0,
                format!(
                    "m=256 recall@10 {:.4} (>=0.9) scanning {:.0}; graph matches it at beam {} with {:.0} computations; ratio {ratio:.2} (<=3)",
                    hier.recall, hier.scanned, p.beam, p.mean_distance_computations
                ),
            );
        }
        Err(e) => out.record(3, false, format!("m=256 recall@10 {:.4}; graph baseline: {e}", hier.recall)),
    }
}
