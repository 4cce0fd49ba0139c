use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Edge, EdgeKind, GraphError, InfrastructureGraph, NodeId};
use crate::geo::{haversine_distance, GeoPoint};
use crate::osm::{InfraStore, PowerLine};

/// Bridge centroid nodes get ids offset past any OSM node id.
pub const BRIDGE_NODE_OFFSET: u64 = 1 << 50;

/// Coordinates are stored with 6 fractional digits; costs are computed from
/// the rounded positions so the graph file reproduces them.
const COORD_DIGITS: i32 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub penalty_factor: f64,
    pub indirect_radius_m: f64,
    pub merge_bridges: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            penalty_factor: 3.0,
            indirect_radius_m: 500.0,
            merge_bridges: false,
        }
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Consecutive tower pairs along each line after dropping non-tower refs.
/// Pairs are unordered (`u < v`), deduplicated and sorted.
pub fn derive_direct_neighbors(lines: &[&PowerLine], tower_ids: &BTreeSet<u64>) -> Vec<(NodeId, NodeId)> {
    let mut pairs = BTreeSet::new();
    for line in lines {
        let towers: Vec<u64> = line
            .node_refs
            .iter()
            .copied()
            .filter(|r| tower_ids.contains(r))
            .collect();
        for w in towers.windows(2) {
            if w[0] != w[1] {
                pairs.insert(ordered(NodeId(w[0]), NodeId(w[1])));
            }
        }
    }
    pairs.into_iter().collect()
}

/// Tower pairs within `radius_m` of each other that are not direct neighbors.
pub fn derive_indirect_neighbors(
    store: &InfraStore,
    direct: &BTreeSet<(NodeId, NodeId)>,
    radius_m: f64,
) -> Vec<(NodeId, NodeId)> {
    let mut pairs = Vec::new();
    for t in store.towers() {
        for near in store.geo_near(t.location, radius_m) {
            if near.id <= t.id {
                continue;
            }
            let pair = (NodeId(t.id), NodeId(near.id));
            if !direct.contains(&pair) {
                pairs.push(pair);
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

pub fn build_graph(store: &InfraStore, config: &GraphConfig) -> Result<InfrastructureGraph, GraphError> {
    if !(config.penalty_factor >= 1.0) {
        return Err(GraphError::InvalidPenalty(config.penalty_factor));
    }
    if store.tower_count() == 0 {
        return Err(GraphError::EmptyStore);
    }

    let mut nodes: BTreeMap<NodeId, GeoPoint> = store
        .towers()
        .map(|t| (NodeId(t.id), t.location.rounded(COORD_DIGITS)))
        .collect();

    let tower_ids: BTreeSet<u64> = store.towers().map(|t| t.id).collect();
    let lines: Vec<&PowerLine> = store.power_lines().collect();
    let direct: BTreeSet<(NodeId, NodeId)> = derive_direct_neighbors(&lines, &tower_ids)
        .into_iter()
        .collect();
    let indirect = derive_indirect_neighbors(store, &direct, config.indirect_radius_m);

    let mut edges = Vec::with_capacity(direct.len() + indirect.len());
    let mut push = |nodes: &BTreeMap<NodeId, GeoPoint>, (u, v): (NodeId, NodeId), kind| {
        let d = haversine_distance(nodes[&u], nodes[&v]);
        if d <= 0.0 {
            log::warn!("towers {u} and {v} share a position, edge skipped");
            return;
        }
        let cost_m = match kind {
            EdgeKind::Direct => d,
            EdgeKind::Indirect => config.penalty_factor * d,
        };
        edges.push(Edge { u, v, cost_m, kind });
    };
    for &pair in &direct {
        push(&nodes, pair, EdgeKind::Direct);
    }
    for &pair in &indirect {
        push(&nodes, pair, EdgeKind::Indirect);
    }

    if config.merge_bridges {
        for bridge in store.bridges() {
            let id = NodeId(BRIDGE_NODE_OFFSET + bridge.id);
            let centroid = bridge.centroid().rounded(COORD_DIGITS);
            nodes.insert(id, centroid);
            for t in store.geo_near(centroid, config.indirect_radius_m) {
                push(&nodes, ordered(NodeId(t.id), id), EdgeKind::Indirect);
            }
        }
    }

    InfrastructureGraph::new(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osm::{BridgePolygon, OsmNode, Tags, DEFAULT_CELL_DEG};
    use proptest::prelude::*;

    fn tower(id: u64, lat: f64, lon: f64) -> OsmNode {
        OsmNode {
            id,
            location: GeoPoint::new(lat, lon).unwrap(),
            tags: Tags::from([("power".into(), "tower".into())]),
        }
    }

    fn line(id: u64, refs: &[u64]) -> PowerLine {
        PowerLine {
            id,
            node_refs: refs.to_vec(),
            tags: Tags::new(),
        }
    }

    fn pair(a: u64, b: u64) -> (NodeId, NodeId) {
        (NodeId(a), NodeId(b))
    }

    #[test]
    fn direct_consecutive_pairs() {
        let towers = BTreeSet::from([1, 2, 3]);
        let l = line(1, &[1, 2, 3]);
        assert_eq!(derive_direct_neighbors(&[&l], &towers), vec![pair(1, 2), pair(2, 3)]);
    }

    #[test]
    fn direct_skips_non_towers() {
        let towers = BTreeSet::from([1, 2]);
        let l = line(1, &[1, 99, 2]);
        assert_eq!(derive_direct_neighbors(&[&l], &towers), vec![pair(1, 2)]);
    }

    #[test]
    fn direct_dedup_across_lines() {
        let towers = BTreeSet::from([1, 2]);
        let (a, b) = (line(1, &[1, 2]), line(2, &[2, 1]));
        assert_eq!(derive_direct_neighbors(&[&a, &b], &towers), vec![pair(1, 2)]);
    }

    fn store(towers: Vec<OsmNode>, lines: Vec<PowerLine>) -> InfraStore {
        InfraStore::from_collections(towers, vec![], lines, vec![], vec![], DEFAULT_CELL_DEG).unwrap()
    }

    #[test]
    fn indirect_nearby_towers() {
        // ~100 m apart on separate lines
        let s = store(
            vec![tower(1, 55.0, 10.0), tower(2, 55.0009, 10.0)],
            vec![],
        );
        assert_eq!(derive_indirect_neighbors(&s, &BTreeSet::new(), 500.0), vec![pair(1, 2)]);
        let direct = BTreeSet::from([pair(1, 2)]);
        assert!(derive_indirect_neighbors(&s, &direct, 500.0).is_empty());
    }

    #[test]
    fn three_collinear_towers() {
        let s = store(
            vec![tower(1, 55.0, 10.0), tower(2, 55.003, 10.0), tower(3, 55.006, 10.0)],
            vec![line(9, &[1, 2, 3])],
        );
        let g = build_graph(&s, &GraphConfig::default()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().len(), 2);
        assert!(g.edges().iter().all(|e| e.kind == EdgeKind::Direct));
    }

    #[test]
    fn identity_penalty() {
        let s = store(
            vec![tower(1, 55.0, 10.0), tower(2, 55.002, 10.0), tower(3, 55.0, 10.003)],
            vec![line(9, &[1, 2])],
        );
        let cfg = GraphConfig {
            penalty_factor: 1.0,
            ..Default::default()
        };
        let g = build_graph(&s, &cfg).unwrap();
        assert!(g.edges().iter().any(|e| e.kind == EdgeKind::Indirect));
        for e in g.edges() {
            let d = haversine_distance(g.nodes()[&e.u], g.nodes()[&e.v]);
            assert_eq!(e.cost_m, d);
        }
    }

    #[test]
    fn empty_store_and_bad_penalty() {
        let s = store(vec![], vec![]);
        assert!(matches!(build_graph(&s, &GraphConfig::default()), Err(GraphError::EmptyStore)));
        let s = store(vec![tower(1, 55.0, 10.0)], vec![]);
        let cfg = GraphConfig {
            penalty_factor: 0.5,
            ..Default::default()
        };
        assert!(matches!(build_graph(&s, &cfg), Err(GraphError::InvalidPenalty(_))));
    }

    #[test]
    fn bridge_merge_is_opt_in() {
        let ring: Vec<GeoPoint> = [(55.0, 10.001), (55.0, 10.002), (55.001, 10.002), (55.0, 10.001)]
            .iter()
            .map(|&(a, b)| GeoPoint::new(a, b).unwrap())
            .collect();
        let bridge = BridgePolygon {
            id: 77,
            node_refs: vec![1001, 1002, 1003, 1001],
            ring,
            tags: Tags::new(),
        };
        let s = InfraStore::from_collections(
            vec![tower(1, 55.0, 10.0)],
            vec![],
            vec![],
            vec![],
            vec![bridge],
            DEFAULT_CELL_DEG,
        )
        .unwrap();
        assert_eq!(build_graph(&s, &GraphConfig::default()).unwrap().node_count(), 1);
        let cfg = GraphConfig {
            merge_bridges: true,
            ..Default::default()
        };
        let g = build_graph(&s, &cfg).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].v, NodeId(BRIDGE_NODE_OFFSET + 77));
    }

    proptest! {
        #[test]
        fn indirect_equals_pairwise_scan(
            pts in prop::collection::vec((55.0..55.02f64, 10.0..10.03f64), 2..120),
            line_refs in prop::collection::vec(0usize..120, 0..30),
            radius in 50.0..1500.0f64,
        ) {
            let towers: Vec<OsmNode> = pts.iter().enumerate()
                .map(|(i, &(a, b))| tower(i as u64 + 1, a, b)).collect();
            let n = towers.len();
            let refs: Vec<u64> = line_refs.iter().map(|r| (r % n) as u64 + 1).collect();
            let lines = if refs.len() >= 2 { vec![line(1, &refs)] } else { vec![] };
            let s = store(towers.clone(), lines);
            let ids: BTreeSet<u64> = towers.iter().map(|t| t.id).collect();
            let lines: Vec<&PowerLine> = s.power_lines().collect();
            let direct: BTreeSet<_> = derive_direct_neighbors(&lines, &ids).into_iter().collect();

            let mut oracle = Vec::new();
            for a in &towers {
                for b in &towers {
                    if a.id < b.id
                        && haversine_distance(a.location, b.location) <= radius
                        && !direct.contains(&pair(a.id, b.id))
                    {
                        oracle.push(pair(a.id, b.id));
                    }
                }
            }
            oracle.sort_unstable();
            prop_assert_eq!(derive_indirect_neighbors(&s, &direct, radius), oracle);
        }
    }
}
