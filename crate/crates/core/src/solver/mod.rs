//! Mission planning: distance matrix assembly through a [`PathClient`],
//! vehicle routing, and waypoint stitching.

mod matrix;
mod vrp;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;
use crate::graph::NodeId;
use crate::pathfinder::{PathRequest, PathResult, SearchGraph, DEFAULT_SNAP_RADIUS_M};

pub use matrix::{
    assemble_distance_matrix, matrix_pairs, CallError, DistanceMatrix, Entity, PathClient, INFINITE_COST,
};
pub use vrp::{solve_vrp, VrpError, VrpOptions, VrpSolution, DEFAULT_MAX_MOVES};

pub const MAX_UAVS: usize = 64;
pub const MAX_TARGETS: usize = 1024;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionRequest {
    pub uavs: Vec<GeoPoint>,
    pub targets: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl MissionRequest {
    pub fn new(uavs: Vec<GeoPoint>, targets: Vec<NodeId>) -> Self {
        MissionRequest {
            uavs,
            targets,
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.uavs.is_empty() || self.uavs.len() > MAX_UAVS {
            return Err(SolveError::InvalidRequest {
                message: format!("{} UAVs, expected 1..={MAX_UAVS}", self.uavs.len()),
            });
        }
        if self.targets.is_empty() || self.targets.len() > MAX_TARGETS {
            return Err(SolveError::InvalidRequest {
                message: format!("{} targets, expected 1..={MAX_TARGETS}", self.targets.len()),
            });
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.targets.iter().find(|t| !seen.insert(**t)) {
            return Err(SolveError::InvalidRequest {
                message: format!("duplicate target {dup}"),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "error")]
pub enum SolveError {
    #[error("invalid request: {message}")]
    InvalidRequest { message: String },
    #[error("unknown node {node}")]
    UnknownNode { node: NodeId },
    #[error("no node within {max_radius_m} m of {point}")]
    NoNodeInRange { point: GeoPoint, max_radius_m: f64 },
    #[error("targets unreachable from every UAV: {targets:?}")]
    UnreachableTargets { targets: Vec<NodeId> },
    #[error("path service unavailable: {message}")]
    PathServiceUnavailable { message: String },
    #[error("no feasible routing for targets {targets:?}")]
    Infeasible { targets: Vec<NodeId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavRoute {
    pub uav_index: usize,
    pub start_node: NodeId,
    pub visit_order: Vec<NodeId>,
    pub waypoints: Vec<GeoPoint>,
    pub distance_m: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub routes: Vec<UavRoute>,
    pub total_distance_m: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_in_flight: usize,
    pub seed: u64,
    pub return_to_start: bool,
    pub max_moves: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            seed: 0,
            return_to_start: false,
            max_moves: DEFAULT_MAX_MOVES,
        }
    }
}

/// Joins cached paths along `stops` (entity indices), dropping the repeated
/// junction node between consecutive legs.
fn stitch(m: &DistanceMatrix, stops: &[usize]) -> Vec<GeoPoint> {
    let mut waypoints: Vec<GeoPoint> = Vec::new();
    for leg in stops.windows(2) {
        let path = m.path(leg[0], leg[1]).expect("routed legs are finite");
        let skip = usize::from(!waypoints.is_empty());
        waypoints.extend(path.points.iter().skip(skip));
    }
    waypoints
}

fn start_point(m: &DistanceMatrix, uav: usize) -> Option<GeoPoint> {
    (m.num_sources..m.len())
        .find_map(|j| m.path(uav, j))
        .map(|p: std::borrow::Cow<'_, PathResult>| p.points[0])
}

/// Turns a routing solution into per-UAV routes with waypoints.
pub fn build_plan(m: &DistanceMatrix, solution: &VrpSolution, return_to_start: bool) -> MissionPlan {
    let routes: Vec<UavRoute> = solution
        .routes
        .iter()
        .enumerate()
        .map(|(v, route)| {
            let mut stops = Vec::with_capacity(route.len() + 2);
            stops.push(v);
            stops.extend(route.iter().copied());
            if return_to_start && !route.is_empty() {
                stops.push(v);
            }
            let distance_m = stops.windows(2).map(|w| m.cost[w[0]][w[1]]).sum();
            let waypoints = if route.is_empty() {
                start_point(m, v).into_iter().collect()
            } else {
                stitch(m, &stops)
            };
            UavRoute {
                uav_index: v,
                start_node: m.source_nodes[v],
                visit_order: route
                    .iter()
                    .map(|&t| match m.entities[t] {
                        Entity::Target(id) => id,
                        Entity::Source(_) => unreachable!("routes visit targets only"),
                    })
                    .collect(),
                waypoints,
                distance_m,
            }
        })
        .collect();
    MissionPlan {
        total_distance_m: routes.iter().map(|r| r.distance_m).sum(),
        routes,
    }
}

/// Distance matrix, routing and stitching for one request. A `seed` on the
/// request overrides `opts.seed`.
pub async fn plan_mission<C: PathClient>(
    req: &MissionRequest,
    client: &C,
    opts: &SolverOptions,
) -> Result<MissionPlan, SolveError> {
    let m = assemble_distance_matrix(req, client, opts.max_in_flight).await?;
    let vrp_opts = VrpOptions {
        seed: req.seed.unwrap_or(opts.seed),
        return_to_start: opts.return_to_start,
        max_moves: opts.max_moves,
    };
    let solution = solve_vrp(&m.cost, m.num_sources, &vrp_opts).map_err(|e| match e {
        VrpError::Infeasible(rows) => SolveError::Infeasible {
            targets: rows.into_iter().map(|r| req.targets[r - m.num_sources]).collect(),
        },
        VrpError::InvalidMatrix(message) => SolveError::InvalidRequest { message },
    })?;
    Ok(build_plan(&m, &solution, opts.return_to_start))
}

/// Answers path queries directly against a loaded graph.
#[derive(Debug, Clone)]
pub struct InProcessClient {
    graph: Arc<SearchGraph>,
    snap_radius_m: f64,
}

impl InProcessClient {
    pub fn new(graph: Arc<SearchGraph>) -> Self {
        InProcessClient {
            graph,
            snap_radius_m: DEFAULT_SNAP_RADIUS_M,
        }
    }

    pub fn with_snap_radius(mut self, snap_radius_m: f64) -> Self {
        self.snap_radius_m = snap_radius_m;
        self
    }

    pub fn find_path(&self, req: &PathRequest) -> Result<PathResult, CallError> {
        self.graph.find_path(req, self.snap_radius_m).map_err(CallError::Path)
    }
}

impl PathClient for InProcessClient {
    fn shortest_path(
        &self,
        req: PathRequest,
    ) -> impl std::future::Future<Output = Result<PathResult, CallError>> + Send {
        std::future::ready(self.find_path(&req))
    }
}
