use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BridgePolygon, OsmNode, ParsedPower, PowerLine, StoreError};
use crate::geo::{BoundingBox, GeoPoint, GridIndex};

pub const SCHEMA_VERSION: u32 = 1;
/// Grid cell edge in degrees, roughly 1.1 km of latitude.
pub const DEFAULT_CELL_DEG: f64 = 0.01;

const TOWERS: &str = "towers.json";
const LINE_NODES: &str = "line_nodes.json";
const POWER_LINES: &str = "power_lines.json";
const RAILWAY_NODES: &str = "railway_nodes.json";
const BRIDGES: &str = "bridges.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub schema_version: u32,
    pub cell_deg: f64,
    pub collections: BTreeMap<String, String>,
}

/// Embedded document store of ingested infrastructure. Immutable once built;
/// the tower grid index is derived and rebuilt on load.
#[derive(Debug, Clone)]
pub struct InfraStore {
    towers: BTreeMap<u64, OsmNode>,
    line_nodes: BTreeMap<u64, OsmNode>,
    power_lines: BTreeMap<u64, PowerLine>,
    railway_nodes: BTreeMap<u64, OsmNode>,
    bridges: BTreeMap<u64, BridgePolygon>,
    cell_deg: f64,
    index: GridIndex,
}

impl PartialEq for InfraStore {
    fn eq(&self, other: &Self) -> bool {
        self.towers == other.towers
            && self.line_nodes == other.line_nodes
            && self.power_lines == other.power_lines
            && self.railway_nodes == other.railway_nodes
            && self.bridges == other.bridges
    }
}

fn keyed<T>(items: impl IntoIterator<Item = T>, id: impl Fn(&T) -> u64) -> BTreeMap<u64, T> {
    items.into_iter().map(|t| (id(&t), t)).collect()
}

impl InfraStore {
    pub fn new(
        power: ParsedPower,
        railway_nodes: Vec<OsmNode>,
        bridges: Vec<BridgePolygon>,
    ) -> Result<Self, StoreError> {
        Self::from_collections(
            power.towers,
            power.line_nodes,
            power.lines,
            railway_nodes,
            bridges,
            DEFAULT_CELL_DEG,
        )
    }

    pub fn from_collections(
        towers: Vec<OsmNode>,
        line_nodes: Vec<OsmNode>,
        power_lines: Vec<PowerLine>,
        railway_nodes: Vec<OsmNode>,
        bridges: Vec<BridgePolygon>,
        cell_deg: f64,
    ) -> Result<Self, StoreError> {
        let towers = keyed(towers, |n| n.id);
        let line_nodes = keyed(line_nodes, |n| n.id);
        let power_lines = keyed(power_lines, |l| l.id);
        for line in power_lines.values() {
            if let Some(&node) = line
                .node_refs
                .iter()
                .find(|r| !towers.contains_key(r) && !line_nodes.contains_key(r))
            {
                return Err(StoreError::DanglingReference {
                    line: line.id,
                    node,
                });
            }
        }
        let index = GridIndex::from_points(cell_deg, towers.values().map(|n| (n.id, n.location)));
        Ok(InfraStore {
            towers,
            line_nodes,
            power_lines,
            railway_nodes: keyed(railway_nodes, |n| n.id),
            bridges: keyed(bridges, |b| b.id),
            cell_deg,
            index,
        })
    }

    pub fn towers(&self) -> impl Iterator<Item = &OsmNode> {
        self.towers.values()
    }

    pub fn tower(&self, id: u64) -> Option<&OsmNode> {
        self.towers.get(&id)
    }

    pub fn tower_count(&self) -> usize {
        self.towers.len()
    }

    pub fn line_nodes(&self) -> impl Iterator<Item = &OsmNode> {
        self.line_nodes.values()
    }

    pub fn power_lines(&self) -> impl Iterator<Item = &PowerLine> {
        self.power_lines.values()
    }

    pub fn railway_nodes(&self) -> impl Iterator<Item = &OsmNode> {
        self.railway_nodes.values()
    }

    pub fn bridges(&self) -> impl Iterator<Item = &BridgePolygon> {
        self.bridges.values()
    }

    pub fn towers_in(&self, bbox: &BoundingBox) -> Vec<&OsmNode> {
        self.towers
            .values()
            .filter(|n| bbox.contains(n.location))
            .collect()
    }

    /// Towers within `radius_m` of `p`, with distances, sorted by
    /// `(distance, id)`.
    pub fn geo_near_with_distance(&self, p: GeoPoint, radius_m: f64) -> Vec<(&OsmNode, f64)> {
        self.index
            .within(p, radius_m)
            .into_iter()
            .map(|(id, _, d)| (&self.towers[&id], d))
            .collect()
    }

    /// Towers within `radius_m` of `p`, sorted by `(distance, id)`.
    pub fn geo_near(&self, p: GeoPoint, radius_m: f64) -> Vec<&OsmNode> {
        self.geo_near_with_distance(p, radius_m)
            .into_iter()
            .map(|(n, _)| n)
            .collect()
    }

    /// Writes one JSON document per collection plus `manifest.json` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(TOWERS), &self.towers.values().collect::<Vec<_>>())?;
        write_json(&dir.join(LINE_NODES), &self.line_nodes.values().collect::<Vec<_>>())?;
        write_json(&dir.join(POWER_LINES), &self.power_lines.values().collect::<Vec<_>>())?;
        write_json(&dir.join(RAILWAY_NODES), &self.railway_nodes.values().collect::<Vec<_>>())?;
        write_json(&dir.join(BRIDGES), &self.bridges.values().collect::<Vec<_>>())?;
        let manifest = StoreManifest {
            schema_version: SCHEMA_VERSION,
            cell_deg: self.cell_deg,
            collections: [
                ("towers", TOWERS),
                ("line_nodes", LINE_NODES),
                ("power_lines", POWER_LINES),
                ("railway_nodes", RAILWAY_NODES),
                ("bridges", BRIDGES),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        };
        // manifest last: a store without one is incomplete
        write_json(&dir.join("manifest.json"), &manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let manifest: StoreManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(StoreError::SchemaVersionMismatch {
                found: manifest.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let file = |name: &str| -> Result<std::path::PathBuf, StoreError> {
            manifest
                .collections
                .get(name)
                .map(|f| dir.join(f))
                .ok_or_else(|| {
                    io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("manifest lacks collection {name}"),
                    )
                    .into()
                })
        };
        Self::from_collections(
            read_json(&file("towers")?)?,
            read_json(&file("line_nodes")?)?,
            read_json(&file("power_lines")?)?,
            read_json(&file("railway_nodes")?)?,
            read_json(&file("bridges")?)?,
            manifest.cell_deg,
        )
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec(value).map_err(io::Error::from)?;
    fs::write(path, bytes)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())).into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_distance;
    use crate::osm::Tags;
    use proptest::prelude::*;

    fn tower(id: u64, lat: f64, lon: f64) -> OsmNode {
        OsmNode {
            id,
            location: GeoPoint::new(lat, lon).unwrap(),
            tags: Tags::from([("power".to_string(), "tower".to_string())]),
        }
    }

    fn small_store() -> InfraStore {
        let towers = vec![tower(1, 55.0, 10.0), tower(2, 55.003, 10.0), tower(3, 55.5, 10.5)];
        let lines = vec![PowerLine {
            id: 100,
            node_refs: vec![1, 2],
            tags: Tags::new(),
        }];
        let bridge = BridgePolygon {
            id: 50,
            node_refs: vec![7, 8, 9, 7],
            ring: vec![
                GeoPoint::new(55.1, 10.1).unwrap(),
                GeoPoint::new(55.1, 10.2).unwrap(),
                GeoPoint::new(55.2, 10.1).unwrap(),
                GeoPoint::new(55.1, 10.1).unwrap(),
            ],
            tags: Tags::new(),
        };
        InfraStore::from_collections(towers, vec![], lines, vec![tower(9, 56.0, 9.0)], vec![bridge], 0.01)
            .unwrap()
    }

    #[test]
    fn dangling_line_reference_rejected() {
        let lines = vec![PowerLine {
            id: 1,
            node_refs: vec![1, 5],
            tags: Tags::new(),
        }];
        let err = InfraStore::from_collections(vec![tower(1, 55.0, 10.0)], vec![], lines, vec![], vec![], 0.01)
            .unwrap_err();
        assert!(matches!(err, StoreError::DanglingReference { line: 1, node: 5 }));
    }

    #[test]
    fn geo_near_isolated_tower() {
        let s = small_store();
        let c = GeoPoint::new(55.5, 10.5).unwrap();
        let hits = s.geo_near(c, 0.5);
        assert_eq!(hits.iter().map(|n| n.id).collect::<Vec<_>>(), vec![3]);
        let off = GeoPoint::new(55.25, 10.25).unwrap();
        assert!(s.geo_near(off, 10.0).is_empty());
    }

    #[test]
    fn persist_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = small_store();
        s.persist(dir.path()).unwrap();
        let loaded = InfraStore::load(dir.path()).unwrap();
        assert_eq!(loaded, s);
        assert_eq!(loaded.geo_near(GeoPoint::new(55.0, 10.0).unwrap(), 1000.0).len(), 2);
    }

    #[test]
    fn corrupted_or_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        small_store().persist(dir.path()).unwrap();
        fs::write(dir.path().join("towers.json"), b"[{\"id\": 1, ").unwrap();
        assert!(matches!(InfraStore::load(dir.path()), Err(StoreError::Io(_))));

        small_store().persist(dir.path()).unwrap();
        let m = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        fs::write(
            dir.path().join("manifest.json"),
            m.replace("\"schema_version\":1", "\"schema_version\":7"),
        )
        .unwrap();
        assert!(matches!(
            InfraStore::load(dir.path()),
            Err(StoreError::SchemaVersionMismatch { found: 7, expected: 1 })
        ));

        assert!(matches!(
            InfraStore::load(&dir.path().join("missing")),
            Err(StoreError::Io(_))
        ));
    }

    #[test]
    fn persist_to_read_only_path_fails() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        // a regular file where a directory is needed
        assert!(matches!(
            small_store().persist(&blocker.join("store")),
            Err(StoreError::Io(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn geo_near_equals_linear_scan(
            pts in prop::collection::vec((55.0..55.2f64, 10.0..10.3f64), 0..60),
            c in (54.98..55.22f64, 9.98..10.32f64),
            r in 1.0..8000.0f64,
        ) {
            let towers: Vec<OsmNode> = pts.iter().enumerate()
                .map(|(i, &(la, lo))| tower(i as u64 + 1, la, lo)).collect();
            let store = InfraStore::from_collections(towers.clone(), vec![], vec![], vec![], vec![], DEFAULT_CELL_DEG).unwrap();
            let c = GeoPoint::new(c.0, c.1).unwrap();
            let mut expected: Vec<(f64, u64)> = towers.iter()
                .map(|t| (haversine_distance(c, t.location), t.id))
                .filter(|(d, _)| *d <= r)
                .collect();
            expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let got: Vec<u64> = store.geo_near(c, r).iter().map(|n| n.id).collect();
            prop_assert_eq!(got, expected.iter().map(|e| e.1).collect::<Vec<_>>());
        }
    }
}
