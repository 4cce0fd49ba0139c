use std::collections::{BTreeMap, BTreeSet};

use serde_json::Value;

use super::{BridgePolygon, OsmError, OsmNode, PowerLine, Tags};
use crate::geo::GeoPoint;

/// An element that did not land in any collection, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Discard {
    pub kind: String,
    pub id: Option<u64>,
    pub reason: String,
}

/// Normalized power infrastructure. Every input element is either in one of
/// the three collections or in `discarded`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedPower {
    pub towers: Vec<OsmNode>,
    pub line_nodes: Vec<OsmNode>,
    pub lines: Vec<PowerLine>,
    pub discarded: Vec<Discard>,
}

fn tags_of(el: &Value) -> Tags {
    el.get("tags")
        .and_then(Value::as_object)
        .map(|m| {
            m.iter()
                .filter_map(|(k, v)| v.as_str().map(|s| (k.clone(), s.to_string())))
                .collect()
        })
        .unwrap_or_default()
}

fn discard(discarded: &mut Vec<Discard>, el: &Value, reason: impl Into<String>) {
    let d = Discard {
        kind: el["type"].as_str().unwrap_or("?").to_string(),
        id: el["id"].as_u64(),
        reason: reason.into(),
    };
    log::debug!("discarding {} {:?}: {}", d.kind, d.id, d.reason);
    discarded.push(d);
}

struct Split<'a> {
    nodes: BTreeMap<u64, (OsmNode, &'a Value)>,
    ways: Vec<(u64, Vec<u64>, Tags, &'a Value)>,
}

/// Sorts elements into located nodes and ways; anything else is discarded.
fn split<'a>(raw: &'a [Value], discarded: &mut Vec<Discard>) -> Result<Split<'a>, OsmError> {
    let mut nodes = BTreeMap::new();
    let mut ways = Vec::new();
    for el in raw {
        let id = el["id"]
            .as_u64()
            .filter(|&id| id > 0)
            .ok_or_else(|| OsmError::MalformedResponse(format!("element without id: {el}")))?;
        match el["type"].as_str() {
            Some("node") => {
                let (Some(lat), Some(lon)) = (el["lat"].as_f64(), el["lon"].as_f64()) else {
                    return Err(OsmError::MalformedResponse(format!("node {id} lacks lat/lon")));
                };
                let location = GeoPoint::new(lat, lon)
                    .map_err(|e| OsmError::MalformedResponse(format!("node {id}: {e}")))?;
                if nodes.contains_key(&id) {
                    discard(discarded, el, "duplicate node id");
                    continue;
                }
                let node = OsmNode {
                    id,
                    location,
                    tags: tags_of(el),
                };
                nodes.insert(id, (node, el));
            }
            Some("way") => {
                let refs = el["nodes"]
                    .as_array()
                    .ok_or_else(|| OsmError::MalformedResponse(format!("way {id} lacks nodes")))?
                    .iter()
                    .map(|v| {
                        v.as_u64().ok_or_else(|| {
                            OsmError::MalformedResponse(format!("way {id}: bad node ref {v}"))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                ways.push((id, refs, tags_of(el), el));
            }
            _ => discard(discarded, el, "not a node or way"),
        }
    }
    Ok(Split { nodes, ways })
}

/// Splits an Overpass power response into towers, intermediate line nodes
/// and power lines.
pub fn parse_elements(raw: &[Value]) -> Result<ParsedPower, OsmError> {
    let mut out = ParsedPower::default();
    let Split { nodes, ways } = split(raw, &mut out.discarded)?;

    let mut on_lines = BTreeSet::new();
    for (id, refs, tags, el) in ways {
        if tags.get("power").map(String::as_str) != Some("line") {
            discard(&mut out.discarded, el, "way is not power=line");
            continue;
        }
        if let Some(&missing) = refs.iter().find(|r| !nodes.contains_key(r)) {
            return Err(OsmError::DanglingReference {
                way: id,
                node: missing,
            });
        }
        if refs.len() < 2 {
            discard(&mut out.discarded, el, "power line with fewer than two nodes");
            continue;
        }
        on_lines.extend(refs.iter().copied());
        out.lines.push(PowerLine {
            id,
            node_refs: refs,
            tags,
        });
    }

    for (id, (node, el)) in nodes {
        if node.tags.get("power").map(String::as_str) == Some("tower") {
            out.towers.push(node);
        } else if on_lines.contains(&id) {
            out.line_nodes.push(node);
        } else {
            discard(&mut out.discarded, el, "untagged node not on any power line");
        }
    }
    out.lines.sort_by_key(|l| l.id);
    Ok(out)
}

/// Vertices of `railway=*` ways, modeled like power towers.
pub fn parse_railways(raw: &[Value]) -> Result<Vec<OsmNode>, OsmError> {
    let mut discarded = Vec::new();
    let Split { nodes, ways } = split(raw, &mut discarded)?;
    let mut on_rails = BTreeSet::new();
    for (id, refs, tags, _) in &ways {
        if !tags.contains_key("railway") {
            continue;
        }
        if let Some(&missing) = refs.iter().find(|r| !nodes.contains_key(r)) {
            return Err(OsmError::DanglingReference {
                way: *id,
                node: missing,
            });
        }
        on_rails.extend(refs.iter().copied());
    }
    Ok(nodes
        .into_iter()
        .filter(|(id, (node, _))| on_rails.contains(id) || node.tags.contains_key("railway"))
        .map(|(_, (node, _))| node)
        .collect())
}

/// Closed bridge rings. Open or unresolvable ways produce a warning each.
pub fn parse_bridges(raw: &[Value]) -> (Vec<BridgePolygon>, Vec<String>) {
    let mut discarded = Vec::new();
    let mut warnings = Vec::new();
    let Split { nodes, ways } = match split(raw, &mut discarded) {
        Ok(s) => s,
        Err(e) => return (Vec::new(), vec![e.to_string()]),
    };
    let mut polygons = Vec::new();
    for (id, refs, tags, _) in ways {
        let closed = refs.len() >= 4 && refs.first() == refs.last();
        if !closed {
            let w = format!("bridge way {id} is not a closed ring, skipped");
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        let ring: Option<Vec<GeoPoint>> = refs
            .iter()
            .map(|r| nodes.get(r).map(|(n, _)| n.location))
            .collect();
        match ring {
            Some(ring) => polygons.push(BridgePolygon {
                id,
                node_refs: refs,
                ring,
                tags,
            }),
            None => {
                let w = format!("bridge way {id} references unknown nodes, skipped");
                log::warn!("{w}");
                warnings.push(w);
            }
        }
    }
    polygons.sort_by_key(|p| p.id);
    (polygons, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn node(id: u64, lat: f64, tags: Value) -> Value {
        json!({"type": "node", "id": id, "lat": lat, "lon": 10.0, "tags": tags})
    }

    #[test]
    fn towers_and_line_nodes_are_separated() {
        let raw = vec![
            node(1, 55.0, json!({"power": "tower"})),
            node(2, 55.001, json!({})),
            json!({"type": "way", "id": 7, "nodes": [1, 2], "tags": {"power": "line"}}),
        ];
        let p = parse_elements(&raw).unwrap();
        assert_eq!(p.towers.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1]);
        assert_eq!(p.line_nodes.iter().map(|n| n.id).collect::<Vec<_>>(), vec![2]);
        assert_eq!(p.lines.len(), 1);
        assert_eq!(p.lines[0].node_refs, vec![1, 2]);
        assert!(p.discarded.is_empty());
    }

    #[test]
    fn no_ways_no_lines() {
        let raw = vec![node(1, 55.0, json!({"power": "tower"})), node(2, 55.1, json!({}))];
        let p = parse_elements(&raw).unwrap();
        assert!(p.lines.is_empty());
        assert!(p.line_nodes.is_empty());
        assert_eq!(p.towers.len(), 1);
        assert_eq!(p.discarded.len(), 1);
    }

    #[test]
    fn dangling_reference() {
        let raw = vec![
            node(1, 55.0, json!({"power": "tower"})),
            json!({"type": "way", "id": 7, "nodes": [1, 999], "tags": {"power": "line"}}),
        ];
        assert!(matches!(
            parse_elements(&raw),
            Err(OsmError::DanglingReference { way: 7, node: 999 })
        ));
    }

    #[test]
    fn railway_vertices() {
        let raw = vec![
            node(1, 55.0, json!({})),
            node(2, 55.01, json!({})),
            node(3, 55.02, json!({"highway": "crossing"})),
            json!({"type": "way", "id": 5, "nodes": [1, 2], "tags": {"railway": "rail"}}),
        ];
        let nodes = parse_railways(&raw).unwrap();
        assert_eq!(nodes.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 2]);
    }

    #[test]
    fn bridge_rings() {
        let mut raw = vec![
            node(1, 55.0, json!({})),
            node(2, 55.001, json!({})),
            node(3, 55.002, json!({})),
        ];
        raw.push(json!({"type":"way","id":20,"nodes":[1,2,3,1],"tags":{"man_made":"bridge"}}));
        let (polys, warnings) = parse_bridges(&raw);
        assert_eq!(polys.len(), 1);
        assert!(warnings.is_empty());
        assert_eq!(polys[0].ring.len(), 4);

        raw.pop();
        raw.push(json!({"type":"way","id":21,"nodes":[1,2,3],"tags":{"man_made":"bridge"}}));
        let (polys, warnings) = parse_bridges(&raw);
        assert!(polys.is_empty());
        assert_eq!(warnings.len(), 1);

        assert_eq!(parse_bridges(&[]), (vec![], vec![]));
    }

    proptest! {
        // Every element ends up in exactly one collection or in `discarded`.
        #[test]
        fn parse_is_total(
            n_nodes in 1usize..40,
            tower_mask in prop::collection::vec(any::<bool>(), 40),
            lines in prop::collection::vec(prop::collection::vec(0usize..40, 0..6), 0..6),
            other_ways in 0usize..3,
        ) {
            let mut raw: Vec<Value> = (0..n_nodes)
                .map(|i| {
                    let tags = if tower_mask[i] { json!({"power": "tower"}) } else { json!({}) };
                    node(i as u64 + 1, 55.0 + i as f64 * 1e-3, tags)
                })
                .collect();
            for (k, refs) in lines.iter().enumerate() {
                let refs: Vec<u64> = refs.iter().map(|r| (*r % n_nodes) as u64 + 1).collect();
                raw.push(json!({"type":"way","id": 1000 + k,"nodes": refs,"tags":{"power":"line"}}));
            }
            for k in 0..other_ways {
                raw.push(json!({"type":"way","id": 2000 + k,"nodes":[1],"tags":{"highway":"path"}}));
            }
            raw.push(json!({"type":"relation","id": 3000,"members":[]}));

            let p = parse_elements(&raw).unwrap();
            let placed = p.towers.len() + p.line_nodes.len() + p.lines.len() + p.discarded.len();
            prop_assert_eq!(placed, raw.len());
        }
    }
}
