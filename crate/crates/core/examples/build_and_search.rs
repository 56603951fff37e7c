//! Build a multi-level index, save it, load it back and search it.

use hiervec::dataset::MixtureSpec;
use hiervec::hierarchy::{build_levels, load_index, save_index, search, BuildConfig};
use hiervec::{DistanceMetric, SearchParams};

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(16, 64, 0.15, 4);
    let data = spec.dataset(50_000, DistanceMetric::SquaredL2)?;
    let index = build_levels(&data, &BuildConfig::fixed(500, 0.1)?)?;
    println!("root holds {} vectors over {} clustered levels", index.root().len(), index.clustered_levels());
    for (i, l) in index.levels().iter().enumerate() {
        println!("  level {i}: {} partitions, replication {:.2}", l.partitions.len(), l.replication_factor);
    }

    let dir = std::env::temp_dir().join("hiervec-example-index");
    save_index(&index, &dir)?;
    let index = load_index(&dir)?;

    let q = spec.queries(1)?;
    let (top, trace) = search(&index, q[0].as_slice(), &SearchParams::new(32, 5))?;
    for c in &top {
        println!("{:>6} {:.4}", c.id.index(), c.distance);
    }
    println!(
        "{} fetch rounds, {} vectors scanned, {} wire bytes",
        trace.fetch_rounds(),
        trace.vectors_scanned(),
        trace.wire_bytes()
    );
    Ok(())
}
