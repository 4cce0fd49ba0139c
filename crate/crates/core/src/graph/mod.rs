//! The weighted tower graph: construction from the store, validation,
//! snapping and the on-disk JSON format.

mod build;
mod serial;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, GridIndex};

pub use build::{
    build_graph, derive_direct_neighbors, derive_indirect_neighbors, GraphConfig,
    BRIDGE_NODE_OFFSET,
};
pub use serial::{deserialize_graph, format_fixed6, serialize_graph, GRAPH_SCHEMA_VERSION};

const SNAP_CELL_DEG: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Direct,
    Indirect,
}

/// Undirected edge, stored with `u < v`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub cost_m: f64,
    pub kind: EdgeKind,
}

impl Edge {
    /// Cost in micrometers, the resolution of the graph file.
    fn cost_key(&self) -> i64 {
        (self.cost_m * 1e6).round() as i64
    }
}

/// Costs compare at graph-file resolution (6 fractional digits).
impl PartialEq for Edge {
    fn eq(&self, other: &Self) -> bool {
        self.u == other.u
            && self.v == other.v
            && self.kind == other.kind
            && self.cost_key() == other.cost_key()
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("store holds no towers")]
    EmptyStore,
    #[error("penalty factor must be >= 1, got {0}")]
    InvalidPenalty(f64),
    #[error("invalid edge {u}-{v}: {reason}")]
    InvalidEdge {
        u: NodeId,
        v: NodeId,
        reason: String,
    },
    #[error("corrupt graph file: {0}")]
    CorruptGraphFile(String),
    #[error("no node within {max_radius_m} m of {point}")]
    NoNodeInRange { point: GeoPoint, max_radius_m: f64 },
    #[error("graph is empty")]
    EmptyGraph,
}

/// Tower nodes with direct (same line) and indirect (nearby) edges.
#[derive(Debug, Clone)]
pub struct InfrastructureGraph {
    nodes: BTreeMap<NodeId, GeoPoint>,
    edges: Vec<Edge>,
    index: GridIndex,
}

impl PartialEq for InfrastructureGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl InfrastructureGraph {
    /// Validates and normalizes: edges become `u < v` and sorted by pair.
    pub fn new(nodes: BTreeMap<NodeId, GeoPoint>, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for e in edges {
            let (u, v) = if e.u <= e.v { (e.u, e.v) } else { (e.v, e.u) };
            let bad = |reason: &str| GraphError::InvalidEdge {
                u,
                v,
                reason: reason.to_string(),
            };
            if u == v {
                return Err(bad("self loop"));
            }
            if !nodes.contains_key(&u) || !nodes.contains_key(&v) {
                return Err(bad("endpoint not in graph"));
            }
            if !(e.cost_m.is_finite() && e.cost_m > 0.0) {
                return Err(bad("cost must be positive and finite"));
            }
            if !seen.insert((u, v)) {
                return Err(bad("duplicate pair"));
            }
            normalized.push(Edge { u, v, ..e });
        }
        normalized.sort_by_key(|e| (e.u, e.v));
        let index = GridIndex::from_points(SNAP_CELL_DEG, nodes.iter().map(|(id, p)| (id.0, *p)));
        Ok(InfrastructureGraph {
            nodes,
            edges: normalized,
            index,
        })
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, GeoPoint> {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, id: NodeId) -> Option<GeoPoint> {
        self.nodes.get(&id).copied()
    }

    /// Nearest node to `p` within `max_radius_m`; ties go to the smallest id.
    pub fn snap_to_nearest_node(&self, p: GeoPoint, max_radius_m: f64) -> Result<NodeId, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        self.index
            .nearest(p, max_radius_m)
            .map(|(id, _)| NodeId(id))
            .ok_or(GraphError::NoNodeInRange {
                point: p,
                max_radius_m,
            })
    }
}
