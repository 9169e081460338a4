//! Geodetic primitives on a spherical Earth.
//!
//! Plant-scale geometry (polygons a few meters across) is done on a local
//! tangent plane anchored at an origin point. The linearization uses the
//! mid-latitude between the origin and the point for the east axis, which
//! keeps the map exactly invertible (north alone fixes latitude) while
//! agreeing with great-circle distances to better than 1e-6 relative below
//! a kilometer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IUGG mean Earth radius in meters.
pub const MEAN_EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Largest offset accepted by the tangent-plane conversions.
pub const MAX_LOCAL_RANGE_M: f64 = 100_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("points {0:.1} m apart exceed the local tangent-plane range")]
    OutOfRange(f64),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has consecutive duplicate vertices at index {0}")]
    DuplicateVertex(usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("earth radius must be positive")]
    Radius,
}

/// A WGS84 position. Longitude is kept in `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub alt: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self, GeoError> {
        if !(lat.is_finite() && lon.is_finite() && alt.is_finite()) {
            return Err(GeoError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
            alt,
        })
    }

    pub fn lat_lon(lat: f64, lon: f64) -> Result<Self, GeoError> {
        Self::new(lat, lon, 0.0)
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

fn wrap_pi(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w >= std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthModel {
    pub radius: f64,
}

impl EarthModel {
    pub fn new(radius: f64) -> Result<Self, GeoError> {
        if radius > 0.0 && radius.is_finite() {
            Ok(Self { radius })
        } else {
            Err(GeoError::Radius)
        }
    }
}

impl Default for EarthModel {
    fn default() -> Self {
        Self {
            radius: MEAN_EARTH_RADIUS_M,
        }
    }
}

/// Offset in a local East-North-Up frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnuOffset {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuOffset {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        Self { east, north, up }
    }

    pub fn horizontal_norm(&self) -> f64 {
        self.east.hypot(self.north)
    }
}

/// Great-circle distance in meters using the haversine formula.
pub fn haversine_distance(a: &GeoPoint, b: &GeoPoint, earth: &EarthModel) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = wrap_pi((b.lon - a.lon).to_radians());
    let cc = phi1.cos() * phi2.cos();
    let h = (dphi / 2.0).sin().powi(2) + cc * (dlambda / 2.0).sin().powi(2);
    // 1 - h evaluated directly, so near-antipodal pairs keep full precision
    let k = ((phi1 + phi2) / 2.0).sin().powi(2) + cc * (dlambda / 2.0).cos().powi(2);
    2.0 * earth.radius * h.max(0.0).sqrt().atan2(k.max(0.0).sqrt())
}

/// Local tangent-plane offset of `p` relative to `origin`.
pub fn geo_to_enu(origin: &GeoPoint, p: &GeoPoint, earth: &EarthModel) -> Result<EnuOffset, GeoError> {
    let dphi = (p.lat - origin.lat).to_radians();
    let dlambda = wrap_pi((p.lon - origin.lon).to_radians());
    let mid_lat = 0.5 * (origin.lat + p.lat).to_radians();
    let off = EnuOffset {
        east: earth.radius * mid_lat.cos() * dlambda,
        north: earth.radius * dphi,
        up: p.alt - origin.alt,
    };
    let range = off.horizontal_norm();
    if range > MAX_LOCAL_RANGE_M {
        return Err(GeoError::OutOfRange(range));
    }
    Ok(off)
}

/// Inverse of [`geo_to_enu`].
pub fn enu_to_geo(origin: &GeoPoint, off: &EnuOffset, earth: &EarthModel) -> Result<GeoPoint, GeoError> {
    let range = off.horizontal_norm();
    if !range.is_finite() || !off.up.is_finite() {
        return Err(GeoError::NonFinite);
    }
    if range > MAX_LOCAL_RANGE_M {
        return Err(GeoError::OutOfRange(range));
    }
    let lat = origin.lat + (off.north / earth.radius).to_degrees();
    let mid_cos = (0.5 * (origin.lat + lat)).to_radians().cos();
    if mid_cos <= 1e-12 {
        return Err(GeoError::OutOfRange(range));
    }
    let lon = origin.lon + (off.east / (earth.radius * mid_cos)).to_degrees();
    GeoPoint::new(lat, lon, origin.alt + off.up)
}

/// Closed ring of WGS84 vertices; the closing edge is implied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<GeoPoint>", into = "Vec<GeoPoint>")]
pub struct GeoPolygon {
    vertices: Vec<GeoPoint>,
}

impl TryFrom<Vec<GeoPoint>> for GeoPolygon {
    type Error = GeoError;
    fn try_from(v: Vec<GeoPoint>) -> Result<Self, GeoError> {
        GeoPolygon::new(v)
    }
}

impl From<GeoPolygon> for Vec<GeoPoint> {
    fn from(p: GeoPolygon) -> Self {
        p.vertices
    }
}

impl GeoPolygon {
    pub fn new(vertices: Vec<GeoPoint>) -> Result<Self, GeoError> {
        Self::validate(&vertices, &EarthModel::default())?;
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    /// Builds a polygon from ENU vertices relative to `origin`.
    pub fn from_enu(origin: &GeoPoint, ring: &[EnuOffset], earth: &EarthModel) -> Result<Self, GeoError> {
        let vertices = ring
            .iter()
            .map(|o| enu_to_geo(origin, o, earth))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(vertices)
    }

    /// Vertices projected onto the tangent plane anchored at the first vertex.
    pub fn to_enu(&self, earth: &EarthModel) -> Result<Vec<EnuOffset>, GeoError> {
        self.to_enu_at(&self.vertices[0], earth)
    }

    pub fn to_enu_at(&self, origin: &GeoPoint, earth: &EarthModel) -> Result<Vec<EnuOffset>, GeoError> {
        self.vertices.iter().map(|v| geo_to_enu(origin, v, earth)).collect()
    }

    /// Unsigned area in square meters on the local tangent plane.
    pub fn area_m2(&self, earth: &EarthModel) -> f64 {
        match self.to_enu(earth) {
            Ok(ring) => shoelace(&ring).abs(),
            Err(_) => f64::NAN,
        }
    }

    fn validate(vertices: &[GeoPoint], earth: &EarthModel) -> Result<(), GeoError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeoError::TooFewVertices(n));
        }
        for i in 0..n {
            let a = &vertices[i];
            let b = &vertices[(i + 1) % n];
            if a.lat == b.lat && a.lon == b.lon {
                return Err(GeoError::DuplicateVertex(i));
            }
        }
        let ring: Vec<EnuOffset> = vertices
            .iter()
            .map(|v| geo_to_enu(&vertices[0], v, earth))
            .collect::<Result<_, _>>()?;
        for i in 0..n {
            for j in (i + 2)..n {
                // adjacent through the closing edge
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (p1, p2) = (&ring[i], &ring[(i + 1) % n]);
                let (q1, q2) = (&ring[j], &ring[(j + 1) % n]);
                if segments_cross(p1, p2, q1, q2) {
                    return Err(GeoError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(())
    }
}

fn cross2(o: &EnuOffset, a: &EnuOffset, b: &EnuOffset) -> f64 {
    (a.east - o.east) * (b.north - o.north) - (a.north - o.north) * (b.east - o.east)
}

// Proper crossings only; touching collinear edges of near-degenerate rings are tolerated.
fn segments_cross(p1: &EnuOffset, p2: &EnuOffset, q1: &EnuOffset, q2: &EnuOffset) -> bool {
    let d1 = cross2(q1, q2, p1);
    let d2 = cross2(q1, q2, p2);
    let d3 = cross2(p1, p2, q1);
    let d4 = cross2(p1, p2, q2);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Signed shoelace area (positive for counter-clockwise rings in ENU).
pub fn shoelace(ring: &[EnuOffset]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = &ring[i];
        let b = &ring[(i + 1) % n];
        acc += a.east * b.north - b.east * a.north;
    }
    0.5 * acc
}

/// Area-weighted centroid of a planar ring, or `None` when the area vanishes.
pub fn planar_centroid(ring: &[EnuOffset]) -> Option<(f64, f64)> {
    let area = shoelace(ring);
    let scale: f64 = ring
        .iter()
        .map(|p| p.east.abs().max(p.north.abs()))
        .fold(0.0, f64::max);
    if area.abs() <= 1e-12 * scale.max(1e-6).powi(2) {
        return None;
    }
    let n = ring.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let a = &ring[i];
        let b = &ring[(i + 1) % n];
        let w = a.east * b.north - b.east * a.north;
        cx += (a.east + b.east) * w;
        cy += (a.north + b.north) * w;
    }
    Some((cx / (6.0 * area), cy / (6.0 * area)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centroid {
    pub point: GeoPoint,
    /// Set when the polygon has zero area and the vertex mean was used.
    pub degenerate: bool,
}

/// Area-weighted centroid computed on the tangent plane at the first vertex.
pub fn polygon_centroid(poly: &GeoPolygon, earth: &EarthModel) -> Result<Centroid, GeoError> {
    let origin = poly.vertices()[0];
    let ring = poly.to_enu(earth)?;
    let (east, north, degenerate) = match planar_centroid(&ring) {
        Some((e, n)) => (e, n, false),
        None => {
            let k = ring.len() as f64;
            let e = ring.iter().map(|p| p.east).sum::<f64>() / k;
            let n = ring.iter().map(|p| p.north).sum::<f64>() / k;
            (e, n, true)
        }
    };
    let up = ring.iter().map(|p| p.up).sum::<f64>() / ring.len() as f64;
    let point = enu_to_geo(&origin, &EnuOffset::new(east, north, up), earth)?;
    Ok(Centroid { point, degenerate })
}
