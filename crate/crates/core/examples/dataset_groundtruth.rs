//! Generate a mixture corpus, round-trip it through `.fvecs`, and compute
//! exact ground truth.

use hiervec::dataset::{brute_force_topk, load_vectors, save_vectors, MixtureSpec, VectorFormat};
use hiervec::DistanceMetric;

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(16, 32, 0.1, 7);
    let base = spec.dataset(5_000, DistanceMetric::SquaredL2)?;
    let queries = spec.queries(20)?;

    let dir = std::env::temp_dir().join("hiervec-example-dataset");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("base.fvecs");
    save_vectors(&path, &base, VectorFormat::Fvecs)?;
    let reloaded = load_vectors(&path, VectorFormat::Fvecs)?;
    assert_eq!(reloaded.vectors().data(), base.vectors().data());
    println!("wrote {} x {} to {}", reloaded.len(), reloaded.dim(), path.display());

    let truth = brute_force_topk(&base, &queries, 5)?;
    for (q, row) in truth.rows.iter().take(3).enumerate() {
        let ids: Vec<u64> = row.iter().map(|c| c.id.index()).collect();
        println!("query {q}: top-5 {ids:?}, nearest at {:.4}", row[0].distance);
    }
    truth.save(dir.join("gt.ivecs"), dir.join("gt.dist.fvecs"))?;
    Ok(())
}
