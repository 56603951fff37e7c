//! Build the in-memory proximity graph and find the smallest beam that hits
//! a recall target.

use hiervec::dataset::{brute_force_topk, MixtureSpec};
use hiervec::graph::{build_graph, graph_search, min_beam_for_recall, GraphParams};
use hiervec::DistanceMetric;

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(16, 32, 0.15, 2);
    let data = spec.dataset(10_000, DistanceMetric::SquaredL2)?;
    let queries = spec.queries(100)?;
    let truth = brute_force_topk(&data, &queries, 10)?;

    let g = build_graph(data.vectors(), data.metric, &GraphParams::default())?;
    println!("{} nodes, {} edges, max degree {}", g.len(), g.edge_count(), g.max_degree());

    let (top, stats) = graph_search(&g, queries[0].as_slice(), 10, 32)?;
    println!("query 0: nearest {:?} after {} distance computations", top[0].id, stats.distance_computations);

    let p = min_beam_for_recall(&g, &queries, &truth, 10, 0.95, 10)?;
    println!(
        "beam {} reaches recall@10 {:.3} at {:.0} distance computations per query",
        p.beam, p.recall, p.mean_distance_computations
    );
    Ok(())
}
