//! CSV reports. Every report starts with a `# schema=<name>-v<N>` line;
//! rows are fixed-precision so identical inputs give identical bytes.

use std::fmt::Write as _;

use crate::cluster::{Resource, ThroughputEstimate};
use crate::graph::ShardProbe;
use crate::hierarchy::EvalRow;
use crate::profiler::DensityProfile;

pub const PROFILE_SCHEMA: &str = "hiervec-profile-v1";
pub const EVAL_SCHEMA: &str = "hiervec-eval-v1";
pub const SIMULATE_SCHEMA: &str = "hiervec-simulate-v1";
pub const SHARDPROBE_SCHEMA: &str = "hiervec-shardprobe-v1";

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "nan".into()
    }
}

fn header(out: &mut String, schema: &str, columns: &[&str]) {
    writeln!(out, "# schema={schema}").unwrap();
    writeln!(out, "{}", columns.join(",")).unwrap();
}

/// One row per measured density (densest first), then a
/// `# chosen_density=<d> fell_back=<bool>` trailer.
pub fn profile_csv(p: &DensityProfile) -> String {
    let mut s = String::new();
    header(&mut s, PROFILE_SCHEMA, &["density", "probe_count", "accessed_vectors", "recall"]);
    for r in &p.probes {
        writeln!(s, "{},{},{},{}", num(r.density.value()), r.probe_count, num(r.accessed_vectors), num(r.recall)).unwrap();
    }
    writeln!(s, "# chosen_density={} fell_back={}", num(p.chosen.value()), p.fell_back).unwrap();
    s
}

/// Eval rows joined with the simulated latency and estimated QPS of each
/// `m`. Per-level recall is `;`-separated, root first.
pub fn eval_csv(rows: &[(EvalRow, ThroughputEstimate)]) -> String {
    let mut s = String::new();
    header(
        &mut s,
        EVAL_SCHEMA,
        &[
            "m",
            "k",
            "recall",
            "vectors_scanned",
            "wire_bytes",
            "fetch_rounds",
            "simulated_latency_us",
            "p99_latency_us",
            "estimated_qps",
            "binding",
            "per_level_recall",
        ],
    );
    for (r, t) in rows {
        let per_level: Vec<String> = r.per_level_recall.iter().map(|&x| num(x)).collect();
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.m,
            r.k,
            num(r.recall),
            num(r.mean_vectors_scanned),
            num(r.mean_wire_bytes),
            r.fetch_rounds,
            num(t.mean_latency_us),
            num(t.p99_latency_us),
            num(t.qps),
            t.binding.as_str(),
            per_level.join(";")
        )
        .unwrap();
    }
    s
}

/// One row per node count: peak QPS, binding resource and hottest-node
/// utilization of each resource at that QPS.
pub fn simulate_csv(rows: &[(usize, f64, ThroughputEstimate)]) -> String {
    let mut s = String::new();
    header(
        &mut s,
        SIMULATE_SCHEMA,
        &[
            "nodes",
            "beta",
            "qps",
            "binding",
            "util_disk_iops",
            "util_disk_bandwidth",
            "util_network",
            "util_cpu",
            "mean_latency_us",
            "p99_latency_us",
        ],
    );
    for (nodes, beta, t) in rows {
        write!(s, "{nodes},{},{},{}", num(*beta), num(t.qps), t.binding.as_str()).unwrap();
        for r in Resource::ALL {
            write!(s, ",{}", num(t.utilization_of(r))).unwrap();
        }
        writeln!(s, ",{},{}", num(t.mean_latency_us), num(t.p99_latency_us)).unwrap();
    }
    s
}

pub fn shardprobe_csv(probes: &[ShardProbe]) -> String {
    let mut s = String::new();
    header(
        &mut s,
        SHARDPROBE_SCHEMA,
        &["shards", "beam", "queries", "avg_steps", "avg_cross_node_steps", "p99_cross_node_steps", "cross_node_fraction"],
    );
    for p in probes {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            p.shards,
            p.beam,
            p.per_query.len(),
            num(p.avg_steps),
            num(p.avg_cross_node_steps),
            p.p99_cross_node_steps,
            num(p.cross_node_fraction())
        )
        .unwrap();
    }
    s
}
