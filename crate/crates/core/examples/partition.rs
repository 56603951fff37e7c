//! Cluster at a chosen density, replicate boundary vectors, and deal the
//! partitions out to nodes by pid hash.

use hiervec::cluster::placement_hash;
use hiervec::clustering::{partition_at_density, replicate_boundary, shuffle_partitions, PartitionDensity, PartitionOptions};
use hiervec::dataset::MixtureSpec;
use hiervec::DistanceMetric;

fn main() -> hiervec::Result<()> {
    let data = MixtureSpec::new(16, 64, 0.15, 1).dataset(20_000, DistanceMetric::SquaredL2)?;
    for d in [0.01, 0.05, 0.1] {
        let r = partition_at_density(data.vectors(), PartitionDensity::new(d)?, data.metric, 0, &PartitionOptions::default())?;
        let sizes: Vec<usize> = r.partitions.iter().map(|p| p.len()).collect();
        println!(
            "D={d}: {} partitions, sizes {}..{}",
            r.partitions.len(),
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        );
    }

    let base = partition_at_density(data.vectors(), PartitionDensity::new(0.01)?, data.metric, 0, &PartitionOptions::default())?;
    let replicated = replicate_boundary(&base, 0.1, 8, data.metric)?;
    println!("replication factor with eps=0.1: {:.3}", replicated.replication_factor);

    let nodes = shuffle_partitions(replicated.partitions, 5, placement_hash)?;
    for (i, parts) in nodes.iter().enumerate() {
        let members: usize = parts.iter().map(|p| p.len()).sum();
        println!("node {i}: {} partitions, {members} members", parts.len());
    }
    Ok(())
}
