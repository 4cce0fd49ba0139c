use std::path::Path;

use gridplan_core::graph::{deserialize_graph, InfrastructureGraph};
use gridplan_core::solver::MissionRequest;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAPER_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub source_counts: Vec<usize>,
    pub target_counts: Vec<usize>,
    pub reps_per_cell: usize,
    pub seed: u64,
    /// Free-form label of the graph the workload is drawn from.
    pub graph_ref: String,
    /// Replay the first cell once, unrecorded, before measuring.
    pub warmup: bool,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            source_counts: vec![1, 2, 4, 8, 16],
            target_counts: vec![1, 2, 4, 8, 16, 32, 64],
            reps_per_cell: 10,
            seed: 0,
            graph_ref: String::new(),
            warmup: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("graph has {nodes} nodes, workload needs {needed}")]
    GraphTooSmall { nodes: usize, needed: usize },
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
    #[error("cannot read spec {path}: {reason}")]
    Spec { path: String, reason: String },
    #[error("cannot load graph {source_ref}: {reason}")]
    Graph { source_ref: String, reason: String },
}

/// Reads a graph file, or fetches one when `source` is an http(s) URL.
pub fn load_graph(source: &str) -> Result<InfrastructureGraph, WorkloadError> {
    let fail = |reason: String| WorkloadError::Graph {
        source_ref: source.to_owned(),
        reason,
    };
    let bytes = if source.starts_with("http://") || source.starts_with("https://") {
        ureq::get(source)
            .call()
            .map_err(|e| fail(e.to_string()))?
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(|e| fail(e.to_string()))?
    } else {
        std::fs::read(source).map_err(|e| fail(e.to_string()))?
    };
    deserialize_graph(&bytes).map_err(|e| fail(e.to_string()))
}

impl WorkloadSpec {
    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let fail = |reason: String| WorkloadError::Spec {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| fail(e.to_string()))
    }

    pub fn paper_scale(mut self) -> Self {
        self.reps_per_cell = PAPER_REPS;
        self
    }

    /// Grid cells in sweep order: sources outer, targets inner.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.source_counts
            .iter()
            .flat_map(|&s| self.target_counts.iter().map(move |&t| (s, t)))
            .collect()
    }

    pub fn total_requests(&self) -> usize {
        self.cells().len() * self.reps_per_cell
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        if self.reps_per_cell == 0 {
            return Err(WorkloadError::InvalidSpec("reps_per_cell must be positive".into()));
        }
        if self.source_counts.is_empty() || self.target_counts.is_empty() {
            return Err(WorkloadError::InvalidSpec("empty grid axis".into()));
        }
        if self.source_counts.contains(&0) || self.target_counts.contains(&0) {
            return Err(WorkloadError::InvalidSpec("grid counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub sources: usize,
    pub targets: usize,
    pub rep: usize,
    pub request: MissionRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub spec: WorkloadSpec,
    /// SHA-256 over the canonical JSON of `items`.
    pub hash: String,
    pub items: Vec<WorkItem>,
}

fn hash_items(items: &[WorkItem]) -> String {
    let bytes = serde_json::to_vec(items).expect("work items serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Draws `sources + targets` distinct graph nodes per request: the first
/// `sources` become UAV positions, the rest are targets.
pub fn generate_workload(spec: &WorkloadSpec, graph: &InfrastructureGraph) -> Result<Workload, WorkloadError> {
    spec.validate()?;
    let nodes: Vec<_> = graph.nodes().iter().map(|(&id, &p)| (id, p)).collect();
    let needed = spec.source_counts.iter().max().expect("non-empty") + spec.target_counts.iter().max().expect("non-empty");
    if nodes.len() < needed {
        return Err(WorkloadError::GraphTooSmall {
            nodes: nodes.len(),
            needed,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut items = Vec::with_capacity(spec.total_requests());
    for (s, t) in spec.cells() {
        for rep in 0..spec.reps_per_cell {
            let picked = index::sample(&mut rng, nodes.len(), s + t).into_vec();
            let request = MissionRequest {
                uavs: picked[..s].iter().map(|&i| nodes[i].1).collect(),
                targets: picked[s..].iter().map(|&i| nodes[i].0).collect(),
                seed: None,
            };
            items.push(WorkItem {
                sources: s,
                targets: t,
                rep,
                request,
            });
        }
    }
    Ok(Workload {
        spec: spec.clone(),
        hash: hash_items(&items),
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridplan_core::geo::GeoPoint;
    use gridplan_core::graph::NodeId;
    use std::collections::{BTreeMap, HashSet};

    fn graph(n: u64) -> InfrastructureGraph {
        let nodes: BTreeMap<NodeId, GeoPoint> = (0..n)
            .map(|i| (NodeId(i + 1), GeoPoint::new(55.0 + i as f64 * 0.001, 10.0).unwrap()))
            .collect();
        InfrastructureGraph::new(nodes, vec![]).unwrap()
    }

    #[test]
    fn grid_sizes() {
        let spec = WorkloadSpec::default();
        assert_eq!(spec.cells().len(), 35);
        assert_eq!(spec.total_requests(), 350);
        assert_eq!(spec.clone().paper_scale().total_requests(), 3500);
        let w = generate_workload(&spec.paper_scale(), &graph(100)).unwrap();
        assert_eq!(w.items.len(), 3500);
    }

    #[test]
    fn deterministic_and_distinct() {
        let spec = WorkloadSpec::default();
        let g = graph(200);
        let a = generate_workload(&spec, &g).unwrap();
        let b = generate_workload(&spec, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash.len(), 64);
        for item in &a.items {
            assert_eq!(item.request.uavs.len(), item.sources);
            assert_eq!(item.request.targets.len(), item.targets);
            let uav_nodes: HashSet<NodeId> = item
                .request
                .uavs
                .iter()
                .map(|p| g.snap_to_nearest_node(*p, 1.0).unwrap())
                .collect();
            let targets: HashSet<NodeId> = item.request.targets.iter().copied().collect();
            assert_eq!(uav_nodes.len() + targets.len(), item.sources + item.targets);
            assert!(uav_nodes.is_disjoint(&targets));
        }
        let other = generate_workload(&WorkloadSpec { seed: 1, ..spec }, &g).unwrap();
        assert_ne!(a.hash, other.hash);
    }

    #[test]
    fn single_cell_on_two_nodes() {
        let spec = WorkloadSpec {
            source_counts: vec![1],
            target_counts: vec![1],
            reps_per_cell: 20,
            ..Default::default()
        };
        let g = graph(2);
        let w = generate_workload(&spec, &g).unwrap();
        for item in &w.items {
            let s = g.snap_to_nearest_node(item.request.uavs[0], 1.0).unwrap();
            assert_ne!(s, item.request.targets[0]);
        }
    }

    #[test]
    fn too_small_graph() {
        let err = generate_workload(&WorkloadSpec::default(), &graph(79)).unwrap_err();
        assert!(matches!(err, WorkloadError::GraphTooSmall { nodes: 79, needed: 80 }));
    }

    #[test]
    fn spec_file_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("spec.json");
        std::fs::write(&p, r#"{"reps_per_cell": 3, "seed": 9}"#).unwrap();
        let spec = WorkloadSpec::load(&p).unwrap();
        assert_eq!(spec.total_requests(), 105);
        assert_eq!(spec.seed, 9);
    }
}
