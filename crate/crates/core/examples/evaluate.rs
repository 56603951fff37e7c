//! Recall, cost and per-level recall across several `m`.

use hiervec::dataset::{brute_force_topk, MixtureSpec};
use hiervec::hierarchy::{build_levels, evaluate, BuildConfig};
use hiervec::DistanceMetric;

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(16, 64, 0.15, 5);
    let data = spec.dataset(50_000, DistanceMetric::SquaredL2)?;
    let queries = spec.queries(200)?;
    let truth = brute_force_topk(&data, &queries, 10)?;
    let index = build_levels(&data, &BuildConfig::fixed(500, 0.1)?)?;

    println!("m\trecall@10\tscanned\tper-level");
    for r in evaluate(&index, &queries, &truth, &[16, 32, 64, 128], 10)? {
        println!("{}\t{:.3}\t\t{:.0}\t{:.2?}", r.m, r.recall, r.mean_vectors_scanned, r.per_level_recall);
    }
    Ok(())
}
