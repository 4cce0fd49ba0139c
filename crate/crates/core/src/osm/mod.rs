//! OpenStreetMap infrastructure extraction: Overpass queries (live or from
//! fixture files), element normalization and the embedded document store.

mod overpass;
mod parse;
mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

pub use overpass::{
    fetch_bridges, fetch_power_infrastructure, fetch_railways, OverpassQuery, OverpassSource,
    RawElements,
};
pub use parse::{parse_bridges, parse_elements, parse_railways, Discard, ParsedPower};
pub use store::{InfraStore, StoreManifest, DEFAULT_CELL_DEG, SCHEMA_VERSION};

pub type Tags = BTreeMap<String, String>;

/// A located OSM node: a tower, an intermediate line vertex or a railway vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsmNode {
    pub id: u64,
    pub location: GeoPoint,
    #[serde(default)]
    pub tags: Tags,
}

/// An OSM `power=line` way. `node_refs` keeps the source order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLine {
    pub id: u64,
    pub node_refs: Vec<u64>,
    #[serde(default)]
    pub tags: Tags,
}

/// Closed outline of a bridge; `ring[i]` is the location of `node_refs[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgePolygon {
    pub id: u64,
    pub node_refs: Vec<u64>,
    pub ring: Vec<GeoPoint>,
    #[serde(default)]
    pub tags: Tags,
}

impl BridgePolygon {
    /// Vertex average of the ring, closing vertex excluded.
    pub fn centroid(&self) -> GeoPoint {
        let open = &self.ring[..self.ring.len().saturating_sub(1).max(1)];
        let n = open.len() as f64;
        let lat = open.iter().map(|p| p.lat()).sum::<f64>() / n;
        let lon = open.iter().map(|p| p.lon()).sum::<f64>() / n;
        GeoPoint::new(lat, lon).expect("mean of valid coordinates is valid")
    }
}

#[derive(Debug, Error)]
pub enum OsmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed Overpass response: {0}")]
    MalformedResponse(String),
    #[error("way {way} references unknown node {node}")]
    DanglingReference { way: u64, node: u64 },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store schema version {found}, expected {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("power line {line} references node {node} missing from towers and line nodes")]
    DanglingReference { line: u64, node: u64 },
}
