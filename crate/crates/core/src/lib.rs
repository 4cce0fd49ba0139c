//! Mission planning for UAV power-line inspection.
//!
//! The pipeline runs from OpenStreetMap extraction ([`osm`]) through the
//! weighted tower graph ([`graph`]) and A* path search ([`pathfinder`]) to the
//! multi-UAV routing solver ([`solver`]). [`synth`] produces deterministic
//! synthetic power grids in Overpass form for tests and benchmarks.

pub mod geo;
pub mod graph;
pub mod osm;
pub mod pathfinder;
pub mod solver;
pub mod synth;

pub use geo::{haversine_distance, BoundingBox, GeoPoint};
pub use graph::{InfrastructureGraph, NodeId};
pub use pathfinder::{PathRequest, PathResult, SearchGraph};
pub use solver::{MissionPlan, MissionRequest};
