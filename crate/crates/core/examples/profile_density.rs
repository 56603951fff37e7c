//! Sweep partition densities and let the profiler pick the balanced one.

use hiervec::dataset::{brute_force_topk, sample, MixtureSpec};
use hiervec::profiler::{select_balanced_density, ProfileConfig};
use hiervec::report::profile_csv;
use hiervec::DistanceMetric;

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(32, 128, 0.25, 3);
    let data = spec.dataset(30_000, DistanceMetric::SquaredL2)?;
    let s = sample(&data, 20_000, 0)?;
    let queries = spec.queries(100)?;
    let truth = brute_force_topk(&s, &queries, 5)?;

    let profile = select_balanced_density(&s, &queries, &truth, &ProfileConfig::default())?;
    print!("{}", profile_csv(&profile));
    Ok(())
}
