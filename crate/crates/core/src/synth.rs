//! Deterministic synthetic power grids, emitted as Overpass JSON so they flow
//! through the same ingestion path as real extracts.
//!
//! Lines are random walks with tower spans between `span_m` bounds. Every line
//! after the first branches off an existing tower unless it is an island, so
//! the tower network is connected apart from the requested islands.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::geo::{BoundingBox, GeoPoint, EARTH_RADIUS_M};

const FIRST_NODE_ID: u64 = 1_000_000;
const FIRST_WAY_ID: u64 = 9_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub bbox: BoundingBox,
    pub towers: usize,
    pub min_span_m: f64,
    pub max_span_m: f64,
    pub min_line_towers: usize,
    pub max_line_towers: usize,
    /// Probability that a span gets an untagged vertex between its towers.
    pub mid_vertex_prob: f64,
    /// Probability that a new line starts away from the existing network.
    pub island_prob: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            // Funen, Denmark
            bbox: BoundingBox::new(55.05, 9.75, 55.6, 10.85).expect("valid bbox"),
            towers: 200,
            min_span_m: 220.0,
            max_span_m: 380.0,
            min_line_towers: 8,
            max_line_towers: 40,
            mid_vertex_prob: 0.1,
            island_prob: 0.0,
        }
    }
}

/// Destination from `p` after `dist_m` on initial bearing `bearing` (radians).
fn destination(p: GeoPoint, bearing: f64, dist_m: f64) -> (f64, f64) {
    let delta = dist_m / EARTH_RADIUS_M;
    let (lat1, lon1) = (p.lat().to_radians(), p.lon().to_radians());
    let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * bearing.cos()).asin();
    let lon2 = lon1
        + (bearing.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
    (lat2.to_degrees(), lon2.to_degrees())
}

fn round7(x: f64) -> f64 {
    (x * 1e7).round() / 1e7
}

/// Overpass-style document with `power=tower` nodes, untagged line vertices
/// and `power=line` ways.
pub fn power_grid(spec: &SynthSpec) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut next_node = FIRST_NODE_ID;
    let mut next_way = FIRST_WAY_ID;
    let mut towers: Vec<(u64, GeoPoint)> = Vec::new();
    let mut vertices: Vec<(u64, GeoPoint)> = Vec::new();
    let mut ways: Vec<Value> = Vec::new();
    let b = spec.bbox;

    let random_point = |rng: &mut ChaCha8Rng| {
        GeoPoint::new(rng.gen_range(b.south..=b.north), rng.gen_range(b.west..=b.east))
            .expect("inside bbox")
    };

    let mut stalls = 0;
    while towers.len() < spec.towers && stalls < 1000 {
        let (start_id, start) = if towers.is_empty() || rng.gen_bool(spec.island_prob) {
            let p = random_point(&mut rng);
            let p = GeoPoint::new(round7(p.lat()), round7(p.lon())).expect("valid");
            let id = next_node;
            next_node += 1;
            towers.push((id, p));
            (id, p)
        } else {
            *towers.choose(&mut rng).expect("non-empty")
        };

        let len = rng.gen_range(spec.min_line_towers..=spec.max_line_towers);
        let mut bearing = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut refs = vec![start_id];
        let mut cur = start;
        for _ in 1..len {
            if towers.len() >= spec.towers {
                break;
            }
            bearing += rng.gen_range(-0.25..0.25);
            let span = rng.gen_range(spec.min_span_m..=spec.max_span_m);
            let (lat, lon) = destination(cur, bearing, span);
            let Ok(next) = GeoPoint::new(round7(lat), round7(lon)) else {
                break;
            };
            if !b.contains(next) {
                // turn around at the border
                bearing += std::f64::consts::PI;
                continue;
            }
            if rng.gen_bool(spec.mid_vertex_prob) {
                let (mlat, mlon) = destination(cur, bearing, span / 2.0);
                let mid = GeoPoint::new(round7(mlat), round7(mlon)).expect("between valid points");
                vertices.push((next_node, mid));
                refs.push(next_node);
                next_node += 1;
            }
            towers.push((next_node, next));
            refs.push(next_node);
            next_node += 1;
            cur = next;
        }
        if refs.len() < 2 {
            stalls += 1;
            continue;
        }
        let voltage = ["132000", "150000", "400000"][rng.gen_range(0..3)];
        let cables = ["3", "6"][rng.gen_range(0..2)];
        ways.push(json!({
            "type": "way",
            "id": next_way,
            "nodes": refs,
            "tags": {"power": "line", "voltage": voltage, "cables": cables, "frequency": "50"}
        }));
        next_way += 1;
    }

    let mut elements: Vec<Value> = towers
        .iter()
        .map(|(id, p)| json!({"type": "node", "id": id, "lat": p.lat(), "lon": p.lon(), "tags": {"power": "tower"}}))
        .chain(
            vertices
                .iter()
                .map(|(id, p)| json!({"type": "node", "id": id, "lat": p.lat(), "lon": p.lon()})),
        )
        .collect();
    elements.sort_by_key(|e| e["id"].as_u64());
    elements.extend(ways);
    json!({"version": 0.6, "generator": "gridplan synth", "elements": elements})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::osm::parse_elements;

    #[test]
    fn exact_tower_count_and_deterministic() {
        let spec = SynthSpec {
            towers: 300,
            ..Default::default()
        };
        let a = power_grid(&spec);
        assert_eq!(a, power_grid(&spec));
        let parsed = parse_elements(a["elements"].as_array().unwrap()).unwrap();
        assert_eq!(parsed.towers.len(), 300);
        assert!(!parsed.lines.is_empty());
        assert!(parsed.towers.iter().all(|t| spec.bbox.contains(t.location)));
    }
}
