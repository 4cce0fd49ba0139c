use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde_json::Value;

use super::{parse_bridges, BridgePolygon, OsmError};
use crate::geo::{BoundingBox, GeoPoint};

/// Unmodified Overpass `elements` entries.
pub type RawElements = Vec<Value>;

/// Where Overpass data comes from: a live interpreter endpoint or a saved
/// response file.
#[derive(Debug, Clone, PartialEq)]
pub enum OverpassSource {
    Endpoint(String),
    Fixture(PathBuf),
}

impl FromStr for OverpassSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with("http://") || s.starts_with("https://") {
            Ok(OverpassSource::Endpoint(s.to_string()))
        } else {
            Ok(OverpassSource::Fixture(PathBuf::from(s)))
        }
    }
}

impl fmt::Display for OverpassSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OverpassSource::Endpoint(url) => f.write_str(url),
            OverpassSource::Fixture(path) => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverpassQuery {
    Power,
    Railways,
    Bridges,
}

impl OverpassQuery {
    /// Overpass QL text. Only the bbox varies.
    pub fn render(self, bbox: &BoundingBox) -> String {
        let b = bbox.to_overpass();
        match self {
            OverpassQuery::Power => format!(
                "[out:json][timeout:180];(node[\"power\"=\"tower\"]({b});way[\"power\"=\"line\"]({b}););(._;>;);out body;"
            ),
            OverpassQuery::Railways => format!(
                "[out:json][timeout:180];(way[\"railway\"]({b}););(._;>;);out body;"
            ),
            OverpassQuery::Bridges => format!(
                "[out:json][timeout:180];(way[\"man_made\"=\"bridge\"]({b});way[\"bridge\"]({b}););(._;>;);out body;"
            ),
        }
    }
}

fn post_query(url: &str, query: &str) -> Result<String, OsmError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(300)))
        .build()
        .into();
    let mut resp = agent
        .post(url)
        .send_form([("data", query)])
        .map_err(|e| OsmError::Transport(e.to_string()))?;
    resp.body_mut()
        .with_config()
        .limit(1 << 30)
        .read_to_string()
        .map_err(|e| OsmError::Transport(e.to_string()))
}

fn elements_of(body: &str) -> Result<RawElements, OsmError> {
    let doc: Value =
        serde_json::from_str(body).map_err(|e| OsmError::MalformedResponse(e.to_string()))?;
    match doc.get("elements") {
        Some(Value::Array(elements)) => Ok(elements.clone()),
        _ => Err(OsmError::MalformedResponse(
            "missing `elements` array".to_string(),
        )),
    }
}

fn node_location(el: &Value) -> Option<GeoPoint> {
    let lat = el.get("lat")?.as_f64()?;
    let lon = el.get("lon")?.as_f64()?;
    GeoPoint::new(lat, lon).ok()
}

/// Applies the bbox selection a live query would have made: ways with at
/// least one vertex inside the box, plus every node inside the box or
/// referenced by a kept way. Elements are passed through untouched.
fn select_bbox(elements: RawElements, bbox: &BoundingBox) -> RawElements {
    let inside: HashSet<u64> = elements
        .iter()
        .filter(|el| el["type"] == "node")
        .filter(|el| node_location(el).is_some_and(|p| bbox.contains(p)))
        .filter_map(|el| el["id"].as_u64())
        .collect();

    let mut referenced = HashSet::new();
    let mut keep_way = Vec::with_capacity(elements.len());
    for el in &elements {
        let keep = if el["type"] == "way" {
            let refs: Vec<u64> = el["nodes"]
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_u64).collect())
                .unwrap_or_default();
            let keep = refs.iter().any(|r| inside.contains(r));
            if keep {
                referenced.extend(refs);
            }
            keep
        } else {
            false
        };
        keep_way.push(keep);
    }

    elements
        .into_iter()
        .zip(keep_way)
        .filter(|(el, keep_way)| match el["type"].as_str() {
            Some("node") => el["id"]
                .as_u64()
                .is_some_and(|id| inside.contains(&id) || referenced.contains(&id)),
            Some("way") => *keep_way,
            _ => false,
        })
        .map(|(el, _)| el)
        .collect()
}

fn fetch(
    query: OverpassQuery,
    bbox: &BoundingBox,
    source: &OverpassSource,
) -> Result<RawElements, OsmError> {
    match source {
        OverpassSource::Fixture(path) => {
            let body = std::fs::read_to_string(path)
                .map_err(|e| OsmError::Transport(format!("{}: {e}", path.display())))?;
            Ok(select_bbox(elements_of(&body)?, bbox))
        }
        OverpassSource::Endpoint(url) => {
            let text = query.render(bbox);
            let body = match post_query(url, &text) {
                Ok(body) => body,
                Err(first) => {
                    log::warn!("overpass request to {url} failed ({first}), retrying once");
                    post_query(url, &text)?
                }
            };
            elements_of(&body)
        }
    }
}

/// `power=tower` nodes and `power=line` ways (with their vertices) in `bbox`.
pub fn fetch_power_infrastructure(
    bbox: &BoundingBox,
    source: &OverpassSource,
) -> Result<RawElements, OsmError> {
    fetch(OverpassQuery::Power, bbox, source)
}

/// `railway=*` ways and their vertices in `bbox`.
pub fn fetch_railways(bbox: &BoundingBox, source: &OverpassSource) -> Result<RawElements, OsmError> {
    fetch(OverpassQuery::Railways, bbox, source)
}

/// Closed bridge outlines in `bbox`, plus one warning per rejected open way.
pub fn fetch_bridges(
    bbox: &BoundingBox,
    source: &OverpassSource,
) -> Result<(Vec<BridgePolygon>, Vec<String>), OsmError> {
    let raw = fetch(OverpassQuery::Bridges, bbox, source)?;
    Ok(parse_bridges(&raw))
}
