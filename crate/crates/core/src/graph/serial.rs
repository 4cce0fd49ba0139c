use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeKind, GraphError, InfrastructureGraph, NodeId};
use crate::geo::GeoPoint;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

/// Fixed 6-fractional-digit decimal, the on-disk form of coordinates and costs.
pub fn format_fixed6(x: f64) -> String {
    format!("{x:.6}")
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    schema_version: u32,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: u64,
    lat: String,
    lon: String,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    u: u64,
    v: u64,
    cost_m: String,
    kind: EdgeKind,
}

pub fn serialize_graph(g: &InfrastructureGraph) -> Vec<u8> {
    let file = GraphFile {
        schema_version: GRAPH_SCHEMA_VERSION,
        nodes: g
            .nodes()
            .iter()
            .map(|(id, p)| NodeRecord {
                id: id.0,
                lat: format_fixed6(p.lat()),
                lon: format_fixed6(p.lon()),
            })
            .collect(),
        edges: g
            .edges()
            .iter()
            .map(|e| EdgeRecord {
                u: e.u.0,
                v: e.v.0,
                cost_m: format_fixed6(e.cost_m),
                kind: e.kind,
            })
            .collect(),
    };
    serde_json::to_vec(&file).expect("graph file serializes")
}

fn decimal(s: &str, what: &str) -> Result<f64, GraphError> {
    s.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| GraphError::CorruptGraphFile(format!("bad {what} {s:?}")))
}

pub fn deserialize_graph(bytes: &[u8]) -> Result<InfrastructureGraph, GraphError> {
    let file: GraphFile =
        serde_json::from_slice(bytes).map_err(|e| GraphError::CorruptGraphFile(e.to_string()))?;
    if file.schema_version != GRAPH_SCHEMA_VERSION {
        return Err(GraphError::CorruptGraphFile(format!(
            "schema version {} (expected {GRAPH_SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let mut nodes = BTreeMap::new();
    for n in file.nodes {
        let p = GeoPoint::new(decimal(&n.lat, "latitude")?, decimal(&n.lon, "longitude")?)
            .map_err(|e| GraphError::CorruptGraphFile(format!("node {}: {e}", n.id)))?;
        if nodes.insert(NodeId(n.id), p).is_some() {
            return Err(GraphError::CorruptGraphFile(format!("duplicate node {}", n.id)));
        }
    }
    let edges = file
        .edges
        .into_iter()
        .map(|e| {
            Ok(Edge {
                u: NodeId(e.u),
                v: NodeId(e.v),
                cost_m: decimal(&e.cost_m, "cost")?,
                kind: e.kind,
            })
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    InfrastructureGraph::new(nodes, edges).map_err(|e| match e {
        GraphError::CorruptGraphFile(_) => e,
        other => GraphError::CorruptGraphFile(other.to_string()),
    })
}
