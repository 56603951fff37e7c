//! Replay queries against a cluster model: analytic capacity bound, node
//! scaling, and a closed-loop event simulation for comparison.

use hiervec::cluster::{
    estimate_from_reports, measure_beta, node_loads, place, simulate_closed_loop, simulate_workload, ClusterModel,
    DesConfig,
};
use hiervec::dataset::MixtureSpec;
use hiervec::hierarchy::{build_levels, BuildConfig};
use hiervec::{DistanceMetric, SearchParams};

fn main() -> hiervec::Result<()> {
    let spec = MixtureSpec::new(16, 64, 0.15, 6);
    let data = spec.dataset(50_000, DistanceMetric::SquaredL2)?;
    let queries = spec.queries(300)?;
    let index = build_levels(&data, &BuildConfig::fixed(500, 0.1)?)?;
    let params = SearchParams::new(32, 10);

    for nodes in [5, 10, 20] {
        let model = ClusterModel::lsv3_like(nodes);
        let reports = simulate_workload(&index, &place(&index, nodes)?, &model, &queries, &params)?;
        let beta = measure_beta(&node_loads(&reports))?;
        let est = estimate_from_reports(&reports, &model.with_beta(beta))?;
        println!(
            "{nodes:>2} nodes: beta {beta:.2}, {:.0} QPS bound by {}, mean latency {:.0} us",
            est.qps,
            est.binding.as_str(),
            est.mean_latency_us
        );
    }

    let model = ClusterModel::small_general(5);
    let reports = simulate_workload(&index, &place(&index, 5)?, &model, &queries, &params)?;
    let analytic = estimate_from_reports(&reports, &model.with_beta(measure_beta(&node_loads(&reports))?))?;
    let des = simulate_closed_loop(&reports, &model, &DesConfig::default())?;
    println!("small_general x5: analytic {:.0} QPS, event simulation {:.0} QPS", analytic.qps, des.qps);
    Ok(())
}
