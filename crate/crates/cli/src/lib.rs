//! `hiervec` command-line driver. Every subcommand reads flags, an optional
//! `--config` file of `key=value` lines (keys are flag names), and built-in
//! defaults, in that order of precedence. Reports are CSV on stdout or in
//! `--out`.

mod opts;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Arg, Command};
use hiervec::cluster::{
    estimate_from_reports, measure_beta, node_loads, place, simulate_workload, ClusterModel,
};
use hiervec::dataset::{
    brute_force_topk, load_vectors, sample, save_vectors, Dataset, DatasetManifest, GroundTruth, MixtureSpec,
    VectorFormat,
};
use hiervec::graph::{build_graph, min_beam_for_recall, shard_and_measure, GraphParams};
use hiervec::hierarchy::{
    build_levels, evaluate, load_index, save_index, search, AutoDensity, Budget, BuildConfig, DensityChoice,
};
use hiervec::profiler::{select_balanced_density, ProfileConfig};
use hiervec::report;
use hiervec::service::{serve_store, Engine, StoreShard};
use hiervec::clustering::PartitionDensity;
use hiervec::{DenseVector, Error, Result, SearchParams};

pub use opts::Opts;

/// Environment variable giving the default worker-thread count.
pub const THREADS_ENV: &str = "HIERVEC_THREADS";

fn opt(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).help(help).num_args(1)
}

fn with_default(name: &'static str, help: &'static str, default: &'static str) -> Arg {
    opt(name, help).default_value(default)
}

fn config_arg() -> Arg {
    opt("config", "key=value file; flags override it")
}

fn search_args(cmd: Command) -> Command {
    cmd.arg(with_default("m", "candidates kept per level", "256"))
        .arg(with_default("k", "results per query", "10"))
        .arg(opt("root-beam", "root graph beam (default max(m, 64))"))
}

fn model_args(cmd: Command) -> Command {
    cmd.arg(with_default("model", "cluster preset (lsv3, small, ideal) or profile file", "lsv3"))
        .arg(with_default("nodes", "store node count (comma list for simulate)", "5"))
}

pub fn command() -> Command {
    Command::new("hiervec")
        .about("Hierarchical partitioned vector search: build, evaluate, simulate, serve")
        .subcommand_required(true)
        .subcommand(
            Command::new("generate")
                .about("Write a synthetic Gaussian-mixture base set and query set")
                .arg(config_arg())
                .arg(with_default("n", "base vectors", "100000"))
                .arg(with_default("queries-n", "query vectors", "1000"))
                .arg(opt("dim", "dimensions (default: sift-like preset)"))
                .arg(opt("clusters", "mixture components"))
                .arg(opt("spread", "per-axis standard deviation"))
                .arg(with_default("seed", "generator seed", "0"))
                .arg(opt("out", "base vectors (.fvecs)"))
                .arg(opt("queries", "query vectors (.fvecs)")),
        )
        .subcommand(
            Command::new("groundtruth")
                .about("Exact top-k by brute force; writes <out>.ivecs ids and <out>.dist.fvecs distances")
                .arg(config_arg())
                .arg(opt("dataset", "vector file or dataset manifest"))
                .arg(opt("queries", "query vector file"))
                .arg(with_default("k", "neighbors per query", "100"))
                .arg(opt("out", "output prefix")),
        )
        .subcommand(
            Command::new("profile")
                .about("Measure read cost across partition densities and pick the balanced one")
                .arg(config_arg())
                .arg(opt("dataset", "vector file or dataset manifest"))
                .arg(with_default("sample", "sample size", "100000"))
                .arg(with_default("queries-n", "held-out profiling queries", "200"))
                .arg(with_default("k", "recall@k", "5"))
                .arg(with_default("target-recall", "recall target", "0.9"))
                .arg(with_default("cost-ratio", "affordable cost over the graph baseline", "2.0"))
                .arg(with_default("seed", "seed", "0"))
                .arg(opt("out", "CSV path (default stdout)")),
        )
        .subcommand(
            Command::new("build")
                .about("Build a hierarchical index and save it as a directory")
                .arg(config_arg())
                .arg(opt("dataset", "vector file or dataset manifest"))
                .arg(opt("budget", "root size in vectors"))
                .arg(with_default("density", "partition density or `auto`", "0.1"))
                .arg(with_default("seed", "seed", "0"))
                .arg(with_default("max-degree", "graph degree bound R", "32"))
                .arg(with_default("build-beam", "graph construction beam", "128"))
                .arg(with_default("epsilon", "boundary replication slack", "0.1"))
                .arg(with_default("max-copies", "copies per vector, 1 disables replication", "8"))
                .arg(opt("out", "index directory")),
        )
        .subcommand(search_args(
            Command::new("search")
                .about("Search an index; CSV of query,rank,id,distance")
                .arg(config_arg())
                .arg(opt("index", "index directory"))
                .arg(opt("queries", "query vector file"))
                .arg(opt("out", "CSV path (default stdout)")),
        ))
        .subcommand(model_args(search_args(
            Command::new("eval")
                .about("Recall, cost and modeled latency/QPS for each m")
                .arg(config_arg())
                .arg(opt("index", "index directory"))
                .arg(opt("queries", "query vector file"))
                .arg(opt("truth", "ground-truth prefix"))
                .arg(opt("out", "CSV path (default stdout)")),
        )))
        .subcommand(model_args(search_args(
            Command::new("simulate")
                .about("Peak throughput across node counts under a cluster model")
                .arg(config_arg())
                .arg(opt("beta", "fixed load imbalance (default: measured per node count)"))
                .arg(opt("index", "index directory"))
                .arg(opt("queries", "query vector file"))
                .arg(opt("out", "CSV path (default stdout)")),
        )))
        .subcommand(
            Command::new("shardprobe")
                .about("Cross-shard steps of a flat graph split into spatial shards")
                .arg(config_arg())
                .arg(opt("dataset", "vector file or dataset manifest"))
                .arg(opt("queries", "query vector file"))
                .arg(with_default("shards", "shard count", "5"))
                .arg(with_default("k", "recall@k", "5"))
                .arg(with_default("target-recall", "recall target", "0.9"))
                .arg(with_default("max-degree", "graph degree bound R", "32"))
                .arg(with_default("seed", "seed", "0"))
                .arg(opt("out", "CSV path (default stdout)")),
        )
        .subcommand(
            Command::new("serve-store")
                .about("Serve this node's partitions of an index directory")
                .arg(config_arg())
                .arg(opt("index", "index directory"))
                .arg(with_default("node", "this node's number", "0"))
                .arg(with_default("nodes", "store node count", "1"))
                .arg(with_default("listen", "address to bind", "127.0.0.1:7700")),
        )
        .subcommand(search_args(
            Command::new("serve-engine")
                .about("Run a query batch through remote store nodes; CSV like `search`")
                .arg(config_arg())
                .arg(opt("index", "index directory (manifest and root graph are read)"))
                .arg(opt("stores", "comma-separated store addresses in node order"))
                .arg(opt("queries", "query vector file"))
                .arg(with_default("timeout-ms", "per-request timeout", "10000"))
                .arg(opt("out", "CSV path (default stdout)")),
        ))
}

/// Run with explicit arguments (including the program name).
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = command().try_get_matches_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            std::process::exit(0)
        }
        _ => Error::Usage(e.to_string().trim().to_string()),
    })?;
    configure_threads()?;
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let o = Opts::new(sub)?;
    match name {
        "generate" => cmd_generate(&o),
        "groundtruth" => cmd_groundtruth(&o),
        "profile" => cmd_profile(&o),
        "build" => cmd_build(&o),
        "search" => cmd_search(&o),
        "eval" => cmd_eval(&o),
        "simulate" => cmd_simulate(&o),
        "shardprobe" => cmd_shardprobe(&o),
        "serve-store" => cmd_serve_store(&o),
        "serve-engine" => cmd_serve_engine(&o),
        other => unreachable!("unhandled subcommand {other}"),
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| Error::Usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// `error: kind=<kind> message=<text>` line for stderr, plus the exit code.
pub fn error_line(e: &Error) -> (String, i32) {
    let kind = match e {
        Error::Usage(_) => "usage",
        Error::Format { .. } => "format",
        Error::Io(_) => "io",
        Error::UnreachableTarget { .. } => "unreachable",
        Error::IndexCorruption { .. } => "corruption",
        Error::Protocol(_) => "protocol",
        Error::Remote { .. } => "remote",
        Error::Node { .. } => "node",
    };
    let code = if matches!(e, Error::Usage(_)) { 2 } else { 1 };
    let msg = e.to_string().replace('\n', " ");
    (format!("error: kind={kind} message={msg}"), code)
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        Error::Format { offset, message } => Error::Format { offset, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

/// A vector file (by extension) or a dataset manifest.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    with_path(
        path,
        match VectorFormat::from_path(path) {
            Some(f) => load_vectors(path, f),
            None => DatasetManifest::load(path).and_then(|m| m.open()),
        },
    )
}

fn load_queries(path: &Path) -> Result<Vec<DenseVector>> {
    Ok(load_dataset(path)?.to_dense())
}

pub fn truth_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let s = prefix.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{s}.ivecs")), PathBuf::from(format!("{s}.dist.fvecs")))
}

fn emit(o: &Opts, text: &str) -> Result<()> {
    match o.path("out")? {
        Some(p) => with_path(&p, fs::write(&p, text).map_err(Error::from)),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn search_params(o: &Opts) -> Result<SearchParams> {
    let m: usize = o.req("m")?;
    let mut p = SearchParams::new(m, o.req("k")?);
    if let Some(b) = o.get("root-beam")? {
        p = p.with_root_beam(b);
    }
    p.validate()?;
    Ok(p)
}

fn cluster_model(o: &Opts, nodes: usize) -> Result<ClusterModel> {
    let name: String = o.req("model")?;
    let m = if Path::new(&name).is_file() {
        ClusterModel::load(&name)?.with_nodes(nodes)
    } else {
        ClusterModel::preset(&name, nodes)?
    };
    m.validate()?;
    Ok(m)
}

fn cmd_generate(o: &Opts) -> Result<()> {
    let seed: u64 = o.req("seed")?;
    let base = MixtureSpec::sift_like(seed);
    let spec = MixtureSpec::new(
        o.get("dim")?.unwrap_or(base.dim),
        o.get("clusters")?.unwrap_or(base.clusters),
        o.get("spread")?.unwrap_or(base.spread),
        seed,
    );
    let out = o.req_path("out")?;
    let ds = spec.dataset(o.req("n")?, Default::default())?;
    with_path(&out, save_vectors(&out, &ds, VectorFormat::Fvecs))?;
    if let Some(qp) = o.path("queries")? {
        let qs = spec.queries(o.req("queries-n")?)?;
        let qd = Dataset::from_vectors(&qs, Default::default())?;
        with_path(&qp, save_vectors(&qp, &qd, VectorFormat::Fvecs))?;
    }
    Ok(())
}

fn cmd_groundtruth(o: &Opts) -> Result<()> {
    let ds = load_dataset(&o.req_path("dataset")?)?;
    let qs = load_queries(&o.req_path("queries")?)?;
    let truth = brute_force_topk(&ds, &qs, o.req("k")?)?;
    let (ids, dists) = truth_paths(&o.req_path("out")?);
    with_path(&ids, truth.save(&ids, &dists))
}

fn cmd_profile(o: &Opts) -> Result<()> {
    let seed: u64 = o.req("seed")?;
    let ds = load_dataset(&o.req_path("dataset")?)?;
    let size = o.req::<usize>("sample")?.min(ds.len());
    let sampled = sample(&ds, size, seed)?;
    let (base, queries) = sampled.split_off_queries(o.req::<usize>("queries-n")?.min(size / 10))?;
    let cfg = ProfileConfig {
        target_recall: o.req("target-recall")?,
        k: o.req("k")?,
        cost_ratio: o.req("cost-ratio")?,
        seed,
        ..ProfileConfig::default()
    };
    let truth = brute_force_topk(&base, &queries, cfg.k)?;
    let profile = select_balanced_density(&base, &queries, &truth, &cfg)?;
    emit(o, &report::profile_csv(&profile))
}

fn cmd_build(o: &Opts) -> Result<()> {
    let ds = load_dataset(&o.req_path("dataset")?)?;
    let density: String = o.req("density")?;
    let density = if density == "auto" {
        DensityChoice::Auto(AutoDensity::default())
    } else {
        let d: f64 = density.parse().map_err(|_| Error::Usage(format!("--density: {density:?} is not a number or `auto`")))?;
        DensityChoice::Fixed(PartitionDensity::new(d)?)
    };
    let seed: u64 = o.req("seed")?;
    let mut cfg = BuildConfig::new(Budget::Vectors(o.req("budget")?), density);
    cfg.seed = seed;
    cfg.graph = GraphParams { max_degree: o.req("max-degree")?, build_beam: o.req("build-beam")?, seed };
    cfg.epsilon = o.req("epsilon")?;
    cfg.max_copies = o.req("max-copies")?;
    if let DensityChoice::Auto(a) = &mut cfg.density {
        a.profile.seed = seed;
    }
    let index = build_levels(&ds, &cfg)?;
    let out = o.req_path("out")?;
    with_path(&out, save_index(&index, &out))
}

fn results_csv(results: &[Vec<hiervec::Candidate>]) -> String {
    let mut s = String::from("query,rank,id,distance\n");
    for (q, row) in results.iter().enumerate() {
        for (r, c) in row.iter().enumerate() {
            s.push_str(&format!("{q},{r},{},{}\n", c.id.0, c.distance));
        }
    }
    s
}

fn cmd_search(o: &Opts) -> Result<()> {
    let dir = o.req_path("index")?;
    let index = with_path(&dir, load_index(&dir))?;
    let qs = load_queries(&o.req_path("queries")?)?;
    let p = search_params(o)?;
    let results = qs
        .iter()
        .map(|q| search(&index, q.as_slice(), &p).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    emit(o, &results_csv(&results))
}

fn cmd_eval(o: &Opts) -> Result<()> {
    let dir = o.req_path("index")?;
    let index = with_path(&dir, load_index(&dir))?;
    let qs = load_queries(&o.req_path("queries")?)?;
    let (ids, dists) = truth_paths(&o.req_path("truth")?);
    let truth = with_path(&ids, GroundTruth::load(&ids, &dists))?;
    let ms: Vec<usize> = o.list("m")?.unwrap_or_default();
    let k: usize = o.req("k")?;
    let nodes: usize = o.req("nodes")?;
    let model = cluster_model(o, nodes)?;
    let placement = place(&index, nodes)?;
    let rows = evaluate(&index, &qs, &truth, &ms, k)?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let mut p = SearchParams::new(row.m, k);
        if let Some(b) = o.get("root-beam")? {
            p = p.with_root_beam(b);
        }
        let reports = simulate_workload(&index, &placement, &model, &qs, &p)?;
        let beta = measure_beta(&node_loads(&reports))?;
        let est = estimate_from_reports(&reports, &model.with_beta(beta))?;
        out.push((row, est));
    }
    emit(o, &report::eval_csv(&out))
}

fn cmd_simulate(o: &Opts) -> Result<()> {
    let dir = o.req_path("index")?;
    let index = with_path(&dir, load_index(&dir))?;
    let qs = load_queries(&o.req_path("queries")?)?;
    let p = search_params(o)?;
    let mut rows = Vec::new();
    for nodes in o.list::<usize>("nodes")?.unwrap_or_default() {
        let model = cluster_model(o, nodes)?;
        let reports = simulate_workload(&index, &place(&index, nodes)?, &model, &qs, &p)?;
        let beta = match o.get("beta")? {
            Some(b) => b,
            None => measure_beta(&node_loads(&reports))?,
        };
        rows.push((nodes, beta, estimate_from_reports(&reports, &model.with_beta(beta))?));
    }
    emit(o, &report::simulate_csv(&rows))
}

fn cmd_shardprobe(o: &Opts) -> Result<()> {
    let ds = load_dataset(&o.req_path("dataset")?)?;
    let qs = load_queries(&o.req_path("queries")?)?;
    let k: usize = o.req("k")?;
    let seed: u64 = o.req("seed")?;
    let truth = brute_force_topk(&ds, &qs, k)?;
    let g = build_graph(
        ds.vectors(),
        ds.metric,
        &GraphParams { max_degree: o.req("max-degree")?, seed, ..GraphParams::default() },
    )?;
    let beam = min_beam_for_recall(&g, &qs, &truth, k, o.req("target-recall")?, k)?.beam;
    let probe = shard_and_measure(&g, o.req("shards")?, &qs, k, beam, seed)?;
    emit(o, &report::shardprobe_csv(&[probe]))
}

fn cmd_serve_store(o: &Opts) -> Result<()> {
    let dir = o.req_path("index")?;
    let shard = with_path(&dir, StoreShard::open(&dir, o.req("node")?, o.req("nodes")?))?;
    let listen: String = o.req("listen")?;
    let server = serve_store(shard, listen.as_str())?;
    eprintln!("listening on {}", server.local_addr());
    server.wait();
    Ok(())
}

fn cmd_serve_engine(o: &Opts) -> Result<()> {
    let dir = o.req_path("index")?;
    let stores: Vec<String> = o.list("stores")?.ok_or_else(|| Error::Usage("--stores is required".into()))?;
    let timeout = Duration::from_millis(o.req("timeout-ms")?);
    let engine = with_path(&dir, Engine::open(&dir, stores, timeout))?;
    let qs = load_queries(&o.req_path("queries")?)?;
    let p = search_params(o)?;
    let results = qs
        .iter()
        .map(|q| engine.search(q.as_slice(), &p).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    emit(o, &results_csv(&results))
}
