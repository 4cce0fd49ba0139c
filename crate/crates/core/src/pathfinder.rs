//! A* shortest paths over an [`InfrastructureGraph`].
//!
//! The heuristic is the great-circle distance to the target. Every edge costs
//! at least the great-circle distance between its endpoints, so the heuristic
//! never overestimates. Among equal-cost shortest paths the search returns the
//! lexicographically smallest node-id sequence.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, EARTH_RADIUS_M};
use crate::graph::{GraphError, InfrastructureGraph, NodeId};

pub const DEFAULT_SNAP_RADIUS_M: f64 = 5_000.0;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub node_ids: Vec<NodeId>,
    pub points: Vec<GeoPoint>,
    pub segment_costs_m: Vec<f64>,
    pub total_cost_m: f64,
}

impl PathResult {
    pub fn source(&self) -> NodeId {
        self.node_ids[0]
    }

    pub fn target(&self) -> NodeId {
        *self.node_ids.last().expect("path has at least one node")
    }

    /// The same path walked from target to source.
    pub fn reversed(&self) -> PathResult {
        let mut r = self.clone();
        r.node_ids.reverse();
        r.points.reverse();
        r.segment_costs_m.reverse();
        r
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "error")]
pub enum PathError {
    #[error("unknown node {node}")]
    UnknownNode { node: NodeId },
    #[error("no path from {from} to {to}")]
    Unreachable {
        #[serde(rename = "source")]
        from: NodeId,
        #[serde(rename = "target")]
        to: NodeId,
    },
    #[error("no node within {max_radius_m} m of {point}")]
    NoNodeInRange { point: GeoPoint, max_radius_m: f64 },
}

/// Path endpoint: a graph node or a position to snap onto the graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Node(NodeId),
    Point(GeoPoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRequest {
    pub source: Endpoint,
    pub target: Endpoint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    /// Nodes taken off the open list and expanded.
    pub expanded: usize,
}

/// Compressed adjacency over a graph, ready for repeated searches.
#[derive(Debug, Clone)]
pub struct SearchGraph {
    graph: InfrastructureGraph,
    ids: Vec<NodeId>,
    points: Vec<GeoPoint>,
    // (lat rad, lon rad, cos lat) per node, for the heuristic
    trig: Vec<(f64, f64, f64)>,
    offsets: Vec<usize>,
    heads: Vec<u32>,
    costs: Vec<f64>,
}

impl SearchGraph {
    pub fn new(graph: InfrastructureGraph) -> Self {
        // BTreeMap order: index order is id order
        let ids: Vec<NodeId> = graph.nodes().keys().copied().collect();
        let points: Vec<GeoPoint> = graph.nodes().values().copied().collect();
        let index: HashMap<NodeId, u32> = ids.iter().enumerate().map(|(i, id)| (*id, i as u32)).collect();

        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ids.len()];
        for e in graph.edges() {
            let (u, v) = (index[&e.u], index[&e.v]);
            adj[u as usize].push((v, e.cost_m));
            adj[v as usize].push((u, e.cost_m));
        }
        let mut offsets = Vec::with_capacity(ids.len() + 1);
        let mut heads = Vec::new();
        let mut costs = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_by_key(|&(v, _)| v);
            for (v, c) in list {
                heads.push(v);
                costs.push(c);
            }
            offsets.push(heads.len());
        }
        let trig = points
            .iter()
            .map(|p| {
                let lat = p.lat().to_radians();
                (lat, p.lon().to_radians(), lat.cos())
            })
            .collect();
        SearchGraph {
            graph,
            ids,
            points,
            trig,
            offsets,
            heads,
            costs,
        }
    }

    pub fn graph(&self) -> &InfrastructureGraph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    fn index_of(&self, id: NodeId) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|i| i as u32)
    }

    /// Neighbors of the node at `idx` with edge costs, ascending by index.
    fn neighbors(&self, idx: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (a, b) = (self.offsets[idx as usize], self.offsets[idx as usize + 1]);
        self.heads[a..b].iter().copied().zip(self.costs[a..b].iter().copied())
    }

    fn heuristic(&self, from: u32, to: u32) -> f64 {
        let (lat1, lon1, cos1) = self.trig[from as usize];
        let (lat2, lon2, cos2) = self.trig[to as usize];
        let h = ((lat2 - lat1) / 2.0).sin().powi(2) + cos1 * cos2 * ((lon2 - lon1) / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
    }

    pub fn resolve(&self, endpoint: Endpoint, snap_radius_m: f64) -> Result<NodeId, PathError> {
        match endpoint {
            Endpoint::Node(id) => self
                .index_of(id)
                .map(|_| id)
                .ok_or(PathError::UnknownNode { node: id }),
            Endpoint::Point(p) => self
                .graph
                .snap_to_nearest_node(p, snap_radius_m)
                .map_err(|e| match e {
                    GraphError::NoNodeInRange { point, max_radius_m } => {
                        PathError::NoNodeInRange { point, max_radius_m }
                    }
                    _ => PathError::NoNodeInRange {
                        point: p,
                        max_radius_m: snap_radius_m,
                    },
                }),
        }
    }

    /// Resolves both endpoints (snapping positions) and runs A*.
    pub fn find_path(&self, req: &PathRequest, snap_radius_m: f64) -> Result<PathResult, PathError> {
        let source = self.resolve(req.source, snap_radius_m)?;
        let target = self.resolve(req.target, snap_radius_m)?;
        astar_shortest_path(self, source, target)
    }
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    g: f64,
    idx: u32,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // min-heap on (f, g, id)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Optimal predecessors per reached node: the first in `first`, ties in `more`.
struct Preds {
    first: Vec<u32>,
    more: HashMap<u32, Vec<u32>>,
}

impl Preds {
    fn reset(&mut self, v: u32, u: u32) {
        self.first[v as usize] = u;
        self.more.remove(&v);
    }

    fn add(&mut self, v: u32, u: u32) {
        if self.first[v as usize] == NONE {
            self.first[v as usize] = u;
        } else if self.first[v as usize] != u {
            let extra = self.more.entry(v).or_default();
            if !extra.contains(&u) {
                extra.push(u);
            }
        }
    }

    fn of(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        let first = self.first[v as usize];
        (first != NONE)
            .then_some(first)
            .into_iter()
            .chain(self.more.get(&v).into_iter().flatten().copied())
    }
}

pub fn astar_shortest_path(g: &SearchGraph, source: NodeId, target: NodeId) -> Result<PathResult, PathError> {
    astar_with_stats(g, source, target).map(|(p, _)| p)
}

/// A* returning expansion statistics alongside the path.
pub fn astar_with_stats(
    g: &SearchGraph,
    source: NodeId,
    target: NodeId,
) -> Result<(PathResult, SearchStats), PathError> {
    let s = g.index_of(source).ok_or(PathError::UnknownNode { node: source })?;
    let t = g.index_of(target).ok_or(PathError::UnknownNode { node: target })?;
    let n = g.node_count();

    let mut best = vec![f64::INFINITY; n];
    // g at which a node was last expanded; a strictly better g reopens it
    let mut expanded_at = vec![f64::INFINITY; n];
    let mut preds = Preds {
        first: vec![NONE; n],
        more: HashMap::new(),
    };
    let mut open = BinaryHeap::new();
    let mut stats = SearchStats::default();

    best[s as usize] = 0.0;
    open.push(Open {
        f: g.heuristic(s, t),
        g: 0.0,
        idx: s,
    });

    let mut found = false;
    while let Some(Open { g: gu, idx: u, .. }) = open.pop() {
        if gu > best[u as usize] || gu >= expanded_at[u as usize] {
            continue;
        }
        expanded_at[u as usize] = gu;
        stats.expanded += 1;
        if u == t {
            found = true;
            break;
        }
        for (v, cost) in g.neighbors(u) {
            let gv = gu + cost;
            let known = best[v as usize];
            if gv < known {
                best[v as usize] = gv;
                preds.reset(v, u);
                open.push(Open {
                    f: gv + g.heuristic(v, t),
                    g: gv,
                    idx: v,
                });
            } else if gv == known {
                preds.add(v, u);
            }
        }
    }
    if !found {
        return Err(PathError::Unreachable { from: source, to: target });
    }

    let path = lexicographic_path(g, &preds, s, t);
    Ok((assemble(g, &path), stats))
}

/// Smallest-id walk through the optimal-predecessor DAG from `s` to `t`.
fn lexicographic_path(g: &SearchGraph, preds: &Preds, s: u32, t: u32) -> Vec<u32> {
    if s == t {
        return vec![s];
    }
    // nodes that reach t through optimal predecessor links
    let mut reaches = HashMap::new();
    let mut stack = vec![t];
    reaches.insert(t, ());
    let mut succ: HashMap<u32, Vec<u32>> = HashMap::new();
    while let Some(v) = stack.pop() {
        for u in preds.of(v) {
            succ.entry(u).or_default().push(v);
            if reaches.insert(u, ()).is_none() {
                stack.push(u);
            }
        }
    }
    let mut path = vec![s];
    let mut cur = s;
    while cur != t {
        cur = *succ[&cur].iter().min().expect("every DAG node on the way reaches t");
        path.push(cur);
        debug_assert!(path.len() <= g.node_count());
    }
    path
}

fn assemble(g: &SearchGraph, path: &[u32]) -> PathResult {
    let segment_costs_m: Vec<f64> = path
        .windows(2)
        .map(|w| {
            g.neighbors(w[0])
                .find(|&(v, _)| v == w[1])
                .map(|(_, c)| c)
                .expect("consecutive path nodes share an edge")
        })
        .collect();
    PathResult {
        node_ids: path.iter().map(|&i| g.ids[i as usize]).collect(),
        points: path.iter().map(|&i| g.points[i as usize]).collect(),
        total_cost_m: segment_costs_m.iter().sum(),
        segment_costs_m,
    }
}
