use std::borrow::Cow;
use std::collections::HashMap;
use std::future::Future;

use futures::stream::{self, StreamExt};
use thiserror::Error;

use super::{MissionRequest, SolveError};
use crate::geo::GeoPoint;
use crate::graph::NodeId;
use crate::pathfinder::{Endpoint, PathError, PathRequest, PathResult};

/// Cost of pairs that cannot be traveled.
pub const INFINITE_COST: i64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CallError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("path service transport failure: {0}")]
    Transport(String),
}

/// Anything that answers shortest-path queries: an HTTP client over pathfinder
/// replicas, or an in-process graph.
pub trait PathClient: Sync {
    fn shortest_path(&self, req: PathRequest) -> impl Future<Output = Result<PathResult, CallError>> + Send;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entity {
    Source(GeoPoint),
    Target(NodeId),
}

impl Entity {
    fn endpoint(self) -> Endpoint {
        match self {
            Entity::Source(p) => Endpoint::Point(p),
            Entity::Target(id) => Endpoint::Node(id),
        }
    }
}

/// Pairwise path costs in integer meters over sources then targets.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub entities: Vec<Entity>,
    pub num_sources: usize,
    /// Graph node each source snapped to.
    pub source_nodes: Vec<NodeId>,
    pub cost: Vec<Vec<i64>>,
    /// Keyed by `(i, j)` with `i < j`; only finite entries.
    pub paths: HashMap<(usize, usize), PathResult>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Path from entity `i` to entity `j`, if finite.
    pub fn path(&self, i: usize, j: usize) -> Option<Cow<'_, PathResult>> {
        if i < j {
            self.paths.get(&(i, j)).map(Cow::Borrowed)
        } else {
            self.paths.get(&(j, i)).map(|p| Cow::Owned(p.reversed()))
        }
    }

    pub fn is_finite(&self, i: usize, j: usize) -> bool {
        self.cost[i][j] < INFINITE_COST
    }
}

/// Unordered pairs to query: every source with every target, then every
/// target pair. Each symmetric pair is queried once.
pub fn matrix_pairs(num_sources: usize, num_targets: usize) -> Vec<(usize, usize)> {
    let n = num_sources + num_targets;
    let mut pairs = Vec::with_capacity(num_sources * num_targets + num_targets * num_targets / 2);
    for i in 0..num_sources {
        for j in num_sources..n {
            pairs.push((i, j));
        }
    }
    for i in num_sources..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    pairs
}

async fn call_with_retry<C: PathClient>(client: &C, req: PathRequest) -> Result<PathResult, CallError> {
    match client.shortest_path(req).await {
        Err(CallError::Transport(first)) => {
            log::debug!("path call failed ({first}), retrying once");
            client.shortest_path(req).await
        }
        other => other,
    }
}

/// Queries all needed pairs with at most `max_in_flight` outstanding calls.
/// Results are placed by pair index, so completion order never matters.
pub async fn assemble_distance_matrix<C: PathClient>(
    req: &MissionRequest,
    client: &C,
    max_in_flight: usize,
) -> Result<DistanceMatrix, SolveError> {
    req.validate()?;
    let max_in_flight = max_in_flight.max(1);
    let s = req.uavs.len();
    let entities: Vec<Entity> = req
        .uavs
        .iter()
        .map(|&p| Entity::Source(p))
        .chain(req.targets.iter().map(|&t| Entity::Target(t)))
        .collect();
    let n = entities.len();
    let pairs = matrix_pairs(s, req.targets.len());

    let (entities_ref, pairs_ref) = (&entities, &pairs);
    let results: Vec<(usize, Result<PathResult, CallError>)> = stream::iter(0..pairs.len())
        .map(|k| {
            let (i, j) = pairs_ref[k];
            let entities = entities_ref;
            let preq = PathRequest {
                source: entities[i].endpoint(),
                target: entities[j].endpoint(),
            };
            async move { (k, call_with_retry(client, preq).await) }
        })
        .buffer_unordered(max_in_flight)
        .collect()
        .await;
    let mut ordered: Vec<Option<Result<PathResult, CallError>>> = vec![None; pairs.len()];
    for (k, r) in results {
        ordered[k] = Some(r);
    }

    let mut cost = vec![vec![INFINITE_COST; n]; n];
    for (i, row) in cost.iter_mut().enumerate() {
        row[i] = 0;
    }
    let mut source_nodes: Vec<Option<NodeId>> = vec![None; s];
    let mut paths = HashMap::new();
    for (k, r) in ordered.into_iter().enumerate() {
        let (i, j) = pairs[k];
        match r.expect("every pair answered") {
            Ok(path) => {
                if i < s {
                    source_nodes[i].get_or_insert(path.source());
                }
                let c = path.total_cost_m.round() as i64;
                cost[i][j] = c;
                cost[j][i] = c;
                paths.insert((i, j), path);
            }
            Err(CallError::Path(PathError::Unreachable { from, .. })) => {
                if i < s {
                    source_nodes[i].get_or_insert(from);
                }
            }
            Err(CallError::Path(PathError::UnknownNode { node })) => return Err(SolveError::UnknownNode { node }),
            Err(CallError::Path(PathError::NoNodeInRange { point, max_radius_m })) => {
                return Err(SolveError::NoNodeInRange { point, max_radius_m })
            }
            Err(CallError::Transport(msg)) => return Err(SolveError::PathServiceUnavailable { message: msg }),
        }
    }

    let unreachable: Vec<NodeId> = (s..n)
        .filter(|&j| (0..s).all(|i| cost[i][j] >= INFINITE_COST))
        .map(|j| req.targets[j - s])
        .collect();
    if !unreachable.is_empty() {
        return Err(SolveError::UnreachableTargets { targets: unreachable });
    }

    Ok(DistanceMatrix {
        entities,
        num_sources: s,
        source_nodes: source_nodes
            .into_iter()
            .map(|n| n.expect("every source answered at least one pair"))
            .collect(),
        cost,
        paths,
    })
}
