//! Serve an index from three store nodes on loopback and query it through
//! the engine; the answers match the in-process search.

use hiervec::dataset::MixtureSpec;
use hiervec::hierarchy::{build_levels, search, BuildConfig};
use hiervec::service::{spawn_local_stores, store_addrs, Engine, DEFAULT_TIMEOUT};
use hiervec::{DistanceMetric, SearchParams};

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(16, 64, 0.15, 9);
    let data = spec.dataset(20_000, DistanceMetric::SquaredL2)?;
    let index = build_levels(&data, &BuildConfig::fixed(200, 0.1)?)?;

    let stores = spawn_local_stores(&index, 3)?;
    let engine = Engine::from_index(&index, store_addrs(&stores), DEFAULT_TIMEOUT)?;
    engine.ping()?;

    let params = SearchParams::new(16, 5);
    for q in spec.queries(5)? {
        let (remote, waves) = engine.search(q.as_slice(), &params)?;
        let (local, _) = search(&index, q.as_slice(), &params)?;
        assert_eq!(remote, local);
        let fanout: Vec<usize> = waves.iter().map(|w| w.nodes).collect();
        println!("nearest {:?}, nodes contacted per level {fanout:?}", remote[0].id);
    }
    for (i, s) in engine.store_stats()?.iter().enumerate() {
        println!("store {i}: {} requests, {} vectors scanned", s.requests, s.vectors_scanned);
    }
    for s in stores {
        s.shutdown();
    }
    Ok(())
}
