//! Geodesic primitives: WGS84 points, bounding boxes, great-circle distance
//! and a uniform lat/lon grid index for radius and nearest queries.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used for all distance computations, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("invalid bounding box: {0}")]
    InvalidBoundingBox(String),
}

/// A WGS84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::LatitudeOutOfRange(lat));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::LongitudeOutOfRange(lon));
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Rounds both coordinates to `digits` fractional decimal digits.
    pub fn rounded(&self, digits: i32) -> GeoPoint {
        let scale = 10f64.powi(digits);
        GeoPoint {
            lat: ((self.lat * scale).round() / scale).clamp(-90.0, 90.0),
            lon: ((self.lon * scale).round() / scale).clamp(-180.0, 180.0),
        }
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat, self.lon)
    }
}

/// Great-circle distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();

    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Axis-aligned lat/lon box. Boxes crossing the antimeridian are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub south: f64,
    pub west: f64,
    pub north: f64,
    pub east: f64,
}

impl BoundingBox {
    pub fn new(south: f64, west: f64, north: f64, east: f64) -> Result<Self, GeoError> {
        for lat in [south, north] {
            if !(-90.0..=90.0).contains(&lat) {
                return Err(GeoError::LatitudeOutOfRange(lat));
            }
        }
        for lon in [west, east] {
            if !(-180.0..=180.0).contains(&lon) {
                return Err(GeoError::LongitudeOutOfRange(lon));
            }
        }
        if south > north {
            return Err(GeoError::InvalidBoundingBox(format!(
                "south {south} is north of {north}"
            )));
        }
        if west > east {
            return Err(GeoError::InvalidBoundingBox(format!(
                "west {west} > east {east} (antimeridian-crossing boxes are unsupported)"
            )));
        }
        Ok(BoundingBox {
            south,
            west,
            north,
            east,
        })
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.south..=self.north).contains(&p.lat) && (self.west..=self.east).contains(&p.lon)
    }

    /// Overpass QL bbox filter order: `(south,west,north,east)`.
    pub fn to_overpass(&self) -> String {
        format!("{},{},{},{}", self.south, self.west, self.north, self.east)
    }
}

impl FromStr for BoundingBox {
    type Err = GeoError;

    /// Parses `S,W,N,E`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| GeoError::InvalidBoundingBox(format!("{s:?}: {e}")))?;
        match parts.as_slice() {
            &[s, w, n, e] => BoundingBox::new(s, w, n, e),
            _ => Err(GeoError::InvalidBoundingBox(format!(
                "{s:?}: expected four comma separated values"
            ))),
        }
    }
}

/// Uniform lat/lon grid over `u64` keys. Radius queries return exactly the
/// keys a linear haversine scan would return.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_deg: f64,
    cols: i64,
    rows: i64,
    cells: HashMap<(i64, i64), Vec<(u64, GeoPoint)>>,
    len: usize,
}

impl GridIndex {
    pub fn new(cell_deg: f64) -> Self {
        assert!(cell_deg > 0.0 && cell_deg <= 90.0, "cell size must be in (0, 90]");
        GridIndex {
            cell_deg,
            cols: (360.0 / cell_deg).ceil() as i64,
            rows: (180.0 / cell_deg).ceil() as i64,
            cells: HashMap::new(),
            len: 0,
        }
    }

    pub fn from_points(cell_deg: f64, points: impl IntoIterator<Item = (u64, GeoPoint)>) -> Self {
        let mut index = GridIndex::new(cell_deg);
        for (key, p) in points {
            index.insert(key, p);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn row(&self, lat: f64) -> i64 {
        (((lat + 90.0) / self.cell_deg).floor() as i64).clamp(0, self.rows - 1)
    }

    fn col(&self, lon: f64) -> i64 {
        (((lon + 180.0) / self.cell_deg).floor() as i64).rem_euclid(self.cols)
    }

    pub fn insert(&mut self, key: u64, p: GeoPoint) {
        let cell = (self.row(p.lat), self.col(p.lon));
        self.cells.entry(cell).or_default().push((key, p));
        self.len += 1;
    }

    /// All `(key, point, distance)` within `radius_m` of `center`, sorted by
    /// `(distance, key)`.
    pub fn within(&self, center: GeoPoint, radius_m: f64) -> Vec<(u64, GeoPoint, f64)> {
        let mut hits = Vec::new();
        if radius_m < 0.0 || self.is_empty() {
            return hits;
        }
        // Angular radius plus a margin so cell bounds never clip a boundary hit.
        let delta = radius_m / EARTH_RADIUS_M * (1.0 + 1e-9) + 1e-12;
        let delta_deg = delta.to_degrees();

        let lat_lo = center.lat - delta_deg;
        let lat_hi = center.lat + delta_deg;
        let rows = self.row(lat_lo)..=self.row(lat_hi);

        let full_lon = lat_lo <= -90.0 || lat_hi >= 90.0 || {
            let s = delta.sin() / center.lat.to_radians().cos();
            s >= 1.0
        };
        let cols: Vec<i64> = if full_lon {
            (0..self.cols).collect()
        } else {
            let dlon = (delta.sin() / center.lat.to_radians().cos())
                .asin()
                .to_degrees()
                * (1.0 + 1e-9)
                + 1e-9;
            let lo = ((center.lon - dlon + 180.0) / self.cell_deg).floor() as i64;
            let hi = ((center.lon + dlon + 180.0) / self.cell_deg).floor() as i64;
            if hi - lo + 1 >= self.cols {
                (0..self.cols).collect()
            } else {
                let mut c: Vec<i64> = (lo..=hi).map(|c| c.rem_euclid(self.cols)).collect();
                c.sort_unstable();
                c.dedup();
                c
            }
        };

        for row in rows {
            for &col in &cols {
                if let Some(bucket) = self.cells.get(&(row, col)) {
                    for &(key, p) in bucket {
                        let d = haversine_distance(center, p);
                        if d <= radius_m {
                            hits.push((key, p, d));
                        }
                    }
                }
            }
        }
        hits.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        hits
    }

    /// Closest key within `max_radius_m`, ties broken by smallest key.
    pub fn nearest(&self, center: GeoPoint, max_radius_m: f64) -> Option<(u64, f64)> {
        self.within(center, max_radius_m)
            .first()
            .map(|&(key, _, d)| (key, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identical_points_are_zero_apart() {
        assert_eq!(haversine_distance(p(55.0, 10.0), p(55.0, 10.0)), 0.0);
    }

    #[test]
    fn one_degree_on_equator() {
        // R * pi / 180
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        assert!((expected - 111_194.93).abs() < 0.01);
        let d = haversine_distance(p(0.0, 0.0), p(0.0, 1.0));
        assert!((d - 111_195.0).abs() <= 1.0, "{d}");
        assert!((d - expected).abs() < 1e-6);
    }

    #[test]
    fn out_of_range_coordinates_rejected() {
        assert!(matches!(
            GeoPoint::new(90.5, 0.0),
            Err(GeoError::LatitudeOutOfRange(_))
        ));
        assert!(matches!(
            GeoPoint::new(0.0, -180.1),
            Err(GeoError::LongitudeOutOfRange(_))
        ));
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat": 100, "lon": 0}"#).is_err());
    }

    #[test]
    fn bbox_rules() {
        assert!(BoundingBox::new(54.0, 8.0, 58.0, 13.0).is_ok());
        assert!(BoundingBox::new(58.0, 8.0, 54.0, 13.0).is_err());
        // antimeridian crossing
        assert!(BoundingBox::new(-10.0, 170.0, 10.0, -170.0).is_err());
        let b: BoundingBox = "55.1, 9.5,55.9,10.5".parse().unwrap();
        assert_eq!(b.to_overpass(), "55.1,9.5,55.9,10.5");
        assert!("1,2,3".parse::<BoundingBox>().is_err());
        assert!(b.contains(p(55.5, 10.0)));
        assert!(!b.contains(p(56.0, 10.0)));
    }

    fn linear_within(
        points: &[(u64, GeoPoint)],
        c: GeoPoint,
        r: f64,
    ) -> Vec<(u64, GeoPoint, f64)> {
        let mut out: Vec<_> = points
            .iter()
            .map(|&(k, q)| (k, q, haversine_distance(c, q)))
            .filter(|h| h.2 <= r)
            .collect();
        out.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        out
    }

    #[test]
    fn grid_handles_antimeridian_and_poles() {
        let pts = vec![
            (1, p(0.0, 179.999)),
            (2, p(0.0, -179.999)),
            (3, p(89.999, 0.0)),
            (4, p(89.999, 180.0)),
        ];
        let g = GridIndex::from_points(0.01, pts.clone());
        for (c, r) in [(p(0.0, 180.0), 500.0), (p(90.0, 0.0), 200.0), (p(89.99, 90.0), 5000.0)] {
            assert_eq!(g.within(c, r), linear_within(&pts, c, r));
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(a in -90.0..=90.0f64, b in -180.0..=180.0f64,
                                      c in -90.0..=90.0f64, d in -180.0..=180.0f64) {
            let (x, y) = (p(a, b), p(c, d));
            let dxy = haversine_distance(x, y);
            prop_assert!(dxy >= 0.0);
            prop_assert_eq!(dxy, haversine_distance(y, x));
        }

        #[test]
        fn triangle_inequality(a in -90.0..=90.0f64, b in -180.0..=180.0f64,
                               c in -90.0..=90.0f64, d in -180.0..=180.0f64,
                               e in -90.0..=90.0f64, f in -180.0..=180.0f64) {
            let (x, y, z) = (p(a, b), p(c, d), p(e, f));
            let lhs = haversine_distance(x, z);
            let rhs = haversine_distance(x, y) + haversine_distance(y, z);
            prop_assert!(lhs <= rhs * (1.0 + 1e-6) + 1e-6, "{} > {}", lhs, rhs);
        }

        #[test]
        fn grid_matches_linear_scan(
            pts in prop::collection::vec((54.5..57.5f64, 8.0..12.5f64), 1..200),
            c in (54.5..57.5f64, 8.0..12.5f64),
            r in 1.0..30_000.0f64,
            cell in prop::sample::select(vec![0.01, 0.05, 0.5]),
        ) {
            let pts: Vec<(u64, GeoPoint)> = pts.into_iter().enumerate()
                .map(|(i, (la, lo))| (i as u64 + 1, p(la, lo))).collect();
            let g = GridIndex::from_points(cell, pts.clone());
            let c = p(c.0, c.1);
            prop_assert_eq!(g.within(c, r), linear_within(&pts, c, r));
        }
    }
}
