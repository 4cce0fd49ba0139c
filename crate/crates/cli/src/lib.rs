//! Command implementations behind the `gridplan` binary.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gridplan_bench::host::HostInfo;
use gridplan_bench::run::CsvSink;
use gridplan_bench::{
    build_report, compare_reports, generate_workload, load_graph, run_benchmark, BenchReport, Comparison, Deployment,
    RunError, RunOptions, WorkloadSpec,
};
use gridplan_core::geo::BoundingBox;
use gridplan_core::graph::{build_graph, serialize_graph, GraphConfig, InfrastructureGraph};
use gridplan_core::osm::{fetch_bridges, fetch_power_infrastructure, fetch_railways, parse_elements, parse_railways};
use gridplan_core::osm::{InfraStore, OverpassSource};
use gridplan_core::solver::MissionRequest;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random missions on `graph`: 1 to 3 UAVs placed on towers, 1 to 8 targets,
/// all nodes distinct within a request.
pub fn sample_requests(graph: &InfrastructureGraph, count: usize, seed: u64) -> Vec<MissionRequest> {
    let nodes: Vec<_> = graph.nodes().iter().map(|(&id, &p)| (id, p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let uavs = rng.gen_range(1..=3usize);
            let targets = rng.gen_range(1..=8usize);
            let k = (uavs + targets).min(nodes.len());
            let picked = index::sample(&mut rng, nodes.len(), k).into_vec();
            let uavs = uavs.min(k.saturating_sub(1)).max(1);
            MissionRequest {
                uavs: picked[..uavs].iter().map(|&i| nodes[i].1).collect(),
                targets: picked[uavs..].iter().map(|&i| nodes[i].0).collect(),
                seed: None,
            }
        })
        .collect()
}

/// Fetches power data (and optionally railways and bridges) and persists a
/// store under `out`.
pub fn ingest(
    bbox: &BoundingBox,
    power: &OverpassSource,
    railways: Option<&OverpassSource>,
    bridges: Option<&OverpassSource>,
    out: &Path,
) -> Result<InfraStore> {
    let raw = fetch_power_infrastructure(bbox, power).with_context(|| format!("power data from {power}"))?;
    let parsed = parse_elements(&raw)?;
    for d in &parsed.discarded {
        log::warn!("discarded element: {d:?}");
    }
    let rail = match railways {
        Some(src) => parse_railways(&fetch_railways(bbox, src).with_context(|| format!("railways from {src}"))?)?,
        None => vec![],
    };
    let bridge_polys = match bridges {
        Some(src) => {
            // rejected ways are already logged by the parser
            fetch_bridges(bbox, src).with_context(|| format!("bridges from {src}"))?.0
        }
        None => vec![],
    };
    let store = InfraStore::new(parsed, rail, bridge_polys)?;
    store.persist(out)?;
    Ok(store)
}

/// Builds the graph for the store in `store_dir` and writes it to `out`.
pub fn build_graph_file(store_dir: &Path, config: &GraphConfig, out: &Path) -> Result<InfrastructureGraph> {
    let store = InfraStore::load(store_dir)?;
    let graph = build_graph(&store, config)?;
    std::fs::write(out, serialize_graph(&graph)).with_context(|| format!("writing {}", out.display()))?;
    Ok(graph)
}

/// Benchmark flags that shape the run.
#[derive(Debug, Clone)]
pub struct BenchArgs<'a> {
    pub endpoint: &'a str,
    pub spec: WorkloadSpec,
    pub graph: &'a str,
    pub deployment: Deployment,
    pub options: RunOptions,
}

/// Runs the sweep and writes workload.json, samples.csv and report.json into
/// `out`. If the endpoint dies mid-run, the partial samples are kept, the
/// report covers them, and an error is returned.
pub fn bench(args: &BenchArgs, out: &Path) -> Result<BenchReport> {
    std::fs::create_dir_all(out)?;
    let graph = load_graph(args.graph)?;
    let workload = generate_workload(&args.spec, &graph)?;
    std::fs::write(out.join("workload.json"), serde_json::to_vec_pretty(&workload)?)?;
    log::info!(
        "workload {}: {} requests over {} cells",
        &workload.hash[..12],
        workload.items.len(),
        args.spec.cells().len()
    );
    let csv_path = out.join("samples.csv");
    let mut sink = CsvSink::create(&csv_path)?;
    let result = run_benchmark(args.endpoint, &workload, &args.deployment, &args.options, |s| sink.write(s));
    let (samples, failure) = match result {
        Ok(samples) => (samples, None),
        Err(RunError::EndpointDown { samples, reason }) => (samples, Some(reason)),
        Err(e) => return Err(e.into()),
    };
    if samples.is_empty() {
        CsvSink::finish_empty(&csv_path)?;
    }
    let report = build_report(&samples, args.deployment.clone(), &args.spec, &workload.hash, HostInfo::detect());
    report.save(&out.join("report.json"))?;
    report.write_plots(&out.join("plots"))?;
    if let Some(reason) = failure {
        bail!("endpoint went down after {} samples: {reason}", samples.len());
    }
    Ok(report)
}

/// Compares `a/report.json` with `b/report.json` and writes the results to `out`.
pub fn compare(a: &Path, b: &Path, out: &Path) -> Result<Comparison> {
    let ra = BenchReport::load(&a.join("report.json")).with_context(|| format!("{}/report.json", a.display()))?;
    let rb = BenchReport::load(&b.join("report.json")).with_context(|| format!("{}/report.json", b.display()))?;
    let cmp = compare_reports(&ra, &rb)?;
    cmp.write(out)?;
    Ok(cmp)
}

/// Plain-text table of per-cell means.
pub fn summary(report: &BenchReport) -> String {
    let mut out = String::from("sources targets   n  ok   mean_ms  median_ms    p95_ms\n");
    let f = |v: Option<f64>| v.map(|x| format!("{x:10.1}")).unwrap_or_else(|| format!("{:>10}", "-"));
    for c in &report.cells {
        out.push_str(&format!(
            "{:7} {:7} {:3} {:3}{}{}{}\n",
            c.sources,
            c.targets,
            c.samples,
            c.successes,
            f(c.mean_ms),
            f(c.median_ms),
            f(c.p95_ms)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridplan_core::geo::GeoPoint;
    use gridplan_core::graph::NodeId;
    use std::collections::{BTreeMap, HashSet};

    #[test]
    fn sampled_requests_are_valid_and_seeded() {
        let nodes: BTreeMap<NodeId, GeoPoint> = (0..40)
            .map(|i| (NodeId(i + 1), GeoPoint::new(55.0 + i as f64 * 0.001, 10.0).unwrap()))
            .collect();
        let g = InfrastructureGraph::new(nodes, vec![]).unwrap();
        let a = sample_requests(&g, 30, 5);
        assert_eq!(a, sample_requests(&g, 30, 5));
        assert_ne!(a, sample_requests(&g, 30, 6));
        for r in &a {
            r.validate().unwrap();
            let distinct: HashSet<_> = r.targets.iter().collect();
            assert_eq!(distinct.len(), r.targets.len());
        }
    }
}
