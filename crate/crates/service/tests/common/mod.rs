#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gridplan_core::graph::{build_graph, serialize_graph, GraphConfig};
use gridplan_core::osm::{parse_elements, InfraStore};
use gridplan_core::synth::{power_grid, SynthSpec};
use gridplan_core::{GeoPoint, MissionRequest, NodeId};
use gridplan_service::{start_service, GraphSource, Role, RunningService, ServiceConfig, Upstreams};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn synth_store(towers: usize, seed: u64) -> InfraStore {
    let doc = power_grid(&SynthSpec {
        towers,
        seed,
        ..Default::default()
    });
    let parsed = parse_elements(doc["elements"].as_array().unwrap()).unwrap();
    InfraStore::new(parsed, vec![], vec![]).unwrap()
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub store: InfraStore,
    pub store_path: PathBuf,
    pub graph_path: PathBuf,
}

pub fn fixture(towers: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let store = synth_store(towers, 11);
    let store_path = dir.path().join("store");
    store.persist(&store_path).unwrap();
    let graph = build_graph(&store, &GraphConfig::default()).unwrap();
    let graph_path = dir.path().join("graph.json");
    std::fs::write(&graph_path, serialize_graph(&graph)).unwrap();
    Fixture {
        dir,
        store,
        store_path,
        graph_path,
    }
}

pub fn config(role: Role) -> ServiceConfig {
    ServiceConfig {
        role,
        listen_port: 0,
        upstream_timeout_s: 30,
        ..Default::default()
    }
}

pub async fn monolith(store_path: &Path) -> RunningService {
    start_service(ServiceConfig {
        store_path: Some(store_path.to_owned()),
        ..config(Role::Monolith)
    })
    .await
    .unwrap()
}

pub async fn pathfinder_from_file(graph: &Path) -> RunningService {
    start_service(ServiceConfig {
        graph_source: Some(GraphSource::File(graph.to_owned())),
        ..config(Role::Pathfinder)
    })
    .await
    .unwrap()
}

pub async fn solver(pathfinders: &[String]) -> RunningService {
    start_service(ServiceConfig {
        upstreams: Upstreams {
            pathfinder: pathfinders.to_vec(),
            ..Default::default()
        },
        ..config(Role::Solver)
    })
    .await
    .unwrap()
}

/// Requests whose UAVs sit on random towers and whose targets are random towers.
pub fn random_requests(store: &InfraStore, n: usize, seed: u64) -> Vec<MissionRequest> {
    let ids: Vec<(u64, GeoPoint)> = store.towers().map(|t| (t.id, t.location)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let uavs = 1 + i % 3;
            let targets = 1 + (i * 7) % 9;
            let picked: Vec<&(u64, GeoPoint)> = ids.choose_multiple(&mut rng, uavs + targets).collect();
            MissionRequest {
                uavs: picked[..uavs].iter().map(|t| t.1).collect(),
                targets: picked[uavs..].iter().map(|t| NodeId(t.0)).collect(),
                seed: (i % 2 == 0).then_some(i as u64),
            }
        })
        .collect()
}

pub fn http() -> reqwest::Client {
    reqwest::Client::new()
}

pub async fn metrics_text(url: &str) -> String {
    let resp = http().get(format!("{url}/metrics")).send().await.unwrap();
    assert_eq!(resp.headers()["content-type"], "text/plain; version=0.0.4");
    resp.text().await.unwrap()
}

/// Counter value for one route and status, summed over nothing else.
pub async fn request_count(url: &str, route: &str, status: u16) -> u64 {
    let samples = gridplan_service::metrics::parse_exposition(&metrics_text(url).await).unwrap();
    samples
        .iter()
        .filter(|s| {
            s.name == "http_requests_total" && s.labels["route"] == route && s.labels["status"] == status.to_string()
        })
        .map(|s| s.value as u64)
        .sum()
}
