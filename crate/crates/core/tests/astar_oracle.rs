//! A* against exhaustive path enumeration on small tie-heavy graphs and
//! against Dijkstra on larger ones.

use std::collections::{BTreeMap, BTreeSet};

use gridplan_core::geo::{haversine_distance, GeoPoint};
use gridplan_core::graph::{Edge, EdgeKind, InfrastructureGraph, NodeId};
use gridplan_core::pathfinder::{astar_with_stats, PathError, SearchGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nodes within a meter of each other and small integer costs, so equal-cost
/// paths are common and sums are exact.
fn tie_graph(n: u64, rng: &mut ChaCha8Rng) -> InfrastructureGraph {
    let nodes: BTreeMap<NodeId, GeoPoint> = (1..=n)
        .map(|i| (NodeId(i), GeoPoint::new(55.0 + i as f64 * 1e-6, 10.0).unwrap()))
        .collect();
    let mut edges = Vec::new();
    for u in 1..=n {
        for v in u + 1..=n {
            if rng.gen_bool(0.45) {
                edges.push(Edge {
                    u: NodeId(u),
                    v: NodeId(v),
                    cost_m: rng.gen_range(1..=3) as f64 * 10.0,
                    kind: EdgeKind::Direct,
                });
            }
        }
    }
    InfrastructureGraph::new(nodes, edges).unwrap()
}

/// Cheapest simple path, ties broken by the smallest id sequence.
fn brute_force(g: &InfrastructureGraph, s: NodeId, t: NodeId) -> Option<(f64, Vec<NodeId>)> {
    let mut adj: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
    for e in g.edges() {
        adj.entry(e.u).or_default().push((e.v, e.cost_m));
        adj.entry(e.v).or_default().push((e.u, e.cost_m));
    }
    let mut best: Option<(f64, Vec<NodeId>)> = None;
    let mut path = vec![s];
    fn walk(
        adj: &BTreeMap<NodeId, Vec<(NodeId, f64)>>,
        t: NodeId,
        path: &mut Vec<NodeId>,
        cost: f64,
        best: &mut Option<(f64, Vec<NodeId>)>,
    ) {
        let u = *path.last().unwrap();
        if u == t {
            let better = match best {
                None => true,
                Some((c, p)) => cost < *c || (cost == *c && *path < *p),
            };
            if better {
                *best = Some((cost, path.clone()));
            }
            return;
        }
        for &(v, c) in adj.get(&u).into_iter().flatten() {
            if !path.contains(&v) {
                path.push(v);
                walk(adj, t, path, cost + c, best);
                path.pop();
            }
        }
    }
    walk(&adj, t, &mut path, 0.0, &mut best);
    best
}

#[test]
fn matches_enumeration_including_tie_break() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ties = 0;
    for _ in 0..150 {
        let n = rng.gen_range(2..=8);
        let g = tie_graph(n, &mut rng);
        let sg = SearchGraph::new(g.clone());
        for s in 1..=n {
            for t in 1..=n {
                let (s, t) = (NodeId(s), NodeId(t));
                match (astar_with_stats(&sg, s, t), brute_force(&g, s, t)) {
                    (Ok((p, _)), Some((cost, nodes))) => {
                        assert_eq!(p.total_cost_m, cost, "{s}->{t}");
                        assert_eq!(p.node_ids, nodes, "{s}->{t}");
                        ties += usize::from(p.node_ids.len() > 2);
                    }
                    (Err(PathError::Unreachable { .. }), None) => {}
                    (a, b) => panic!("{s}->{t}: A* {a:?}, enumeration {b:?}"),
                }
            }
        }
    }
    assert!(ties > 100);
}

fn dijkstra_cost(g: &InfrastructureGraph, s: NodeId, t: NodeId) -> Option<f64> {
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::from([(s, 0.0)]);
    let mut done = BTreeSet::new();
    loop {
        let (&u, &d) = dist.iter().filter(|(k, _)| !done.contains(*k)).min_by(|a, b| a.1.total_cmp(b.1))?;
        if u == t {
            return Some(d);
        }
        done.insert(u);
        for e in g.edges() {
            let v = if e.u == u {
                e.v
            } else if e.v == u {
                e.u
            } else {
                continue;
            };
            let nd = d + e.cost_m;
            if dist.get(&v).is_none_or(|&old| nd < old) {
                dist.insert(v, nd);
            }
        }
    }
}

#[test]
fn matches_dijkstra_on_geometric_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let n = rng.gen_range(30..80u64);
        let nodes: BTreeMap<NodeId, GeoPoint> = (1..=n)
            .map(|i| {
                let p = GeoPoint::new(55.0 + rng.gen_range(0.0..0.03), 10.0 + rng.gen_range(0.0..0.05));
                (NodeId(i), p.unwrap().rounded(6))
            })
            .collect();
        let mut pairs = BTreeSet::new();
        for _ in 0..3 * n {
            let (a, b) = (rng.gen_range(1..=n), rng.gen_range(1..=n));
            if a != b {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
        let edges = pairs
            .into_iter()
            .map(|(u, v)| {
                let d = haversine_distance(nodes[&NodeId(u)], nodes[&NodeId(v)]);
                let indirect = rng.gen_bool(0.4);
                Edge {
                    u: NodeId(u),
                    v: NodeId(v),
                    cost_m: if indirect { 3.0 * d } else { d },
                    kind: if indirect { EdgeKind::Indirect } else { EdgeKind::Direct },
                }
            })
            .collect();
        let g = InfrastructureGraph::new(nodes, edges).unwrap();
        let sg = SearchGraph::new(g.clone());
        for _ in 0..15 {
            let (s, t) = (NodeId(rng.gen_range(1..=n)), NodeId(rng.gen_range(1..=n)));
            match (astar_with_stats(&sg, s, t), dijkstra_cost(&g, s, t)) {
                (Ok((p, _)), Some(c)) => assert_eq!(p.total_cost_m, c),
                (Err(PathError::Unreachable { .. }), None) => {}
                (a, b) => panic!("{s}->{t}: A* {a:?}, Dijkstra {b:?}"),
            }
        }
    }
}
