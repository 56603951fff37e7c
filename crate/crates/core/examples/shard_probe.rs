//! Split one flat graph into spatial shards and count how often a traversal
//! hops between them.

use hiervec::dataset::{brute_force_topk, MixtureSpec};
use hiervec::graph::{build_graph, min_beam_for_recall, shard_and_measure, GraphParams};
use hiervec::report::shardprobe_csv;
use hiervec::DistanceMetric;

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(32, 256, 0.3, 8);
    let data = spec.dataset(20_000, DistanceMetric::SquaredL2)?;
    let queries = spec.queries(100)?;
    let truth = brute_force_topk(&data, &queries, 5)?;
    let g = build_graph(data.vectors(), data.metric, &GraphParams::default())?;
    let beam = min_beam_for_recall(&g, &queries, &truth, 5, 0.9, 5)?.beam;

    let probes = [3, 5, 10]
        .iter()
        .map(|&s| shard_and_measure(&g, s, &queries, 5, beam, 0))
        .collect::<hiervec::Result<Vec<_>>>()?;
    print!("{}", shardprobe_csv(&probes));
    Ok(())
}
