//! Mission-level consolidation of repeated detections into defect events.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{
    haversine_distance, polygon_centroid, shoelace, EarthModel, EnuOffset, GeoError, GeoPoint, GeoPolygon,
};
use crate::geoprojection::ProjectedDetection;
use crate::telemetry::MediaRef;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DedupError {
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("min_pts must be at least 1")]
    MinPts,
    #[error("cannot merge an empty cluster")]
    EmptyCluster,
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanParams {
    /// Neighborhood radius in meters.
    pub epsilon: f64,
    /// Neighborhood size (including the point itself) that makes a core point.
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            min_pts: 2,
        }
    }
}

impl DbscanParams {
    pub fn new(epsilon: f64, min_pts: usize) -> Result<Self, DedupError> {
        let p = Self { epsilon, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DedupError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(DedupError::Epsilon(self.epsilon));
        }
        if self.min_pts < 1 {
            return Err(DedupError::MinPts);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClusterLabel {
    Cluster(usize),
    Noise,
}

/// DBSCAN over an arbitrary symmetric distance. Points are visited, and
/// clusters expanded, in index order; cluster ids are contiguous from 0.
pub fn dbscan_by<F: Fn(usize, usize) -> f64>(n: usize, dist: F, params: &DbscanParams) -> Vec<ClusterLabel> {
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| i == j || dist(i, j) <= params.epsilon).collect())
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();
    let mut labels: Vec<Option<ClusterLabel>> = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if labels[i].is_some() {
            continue;
        }
        if !core[i] {
            labels[i] = Some(ClusterLabel::Noise);
            continue;
        }
        let id = next;
        next += 1;
        labels[i] = Some(ClusterLabel::Cluster(id));
        let mut queue: VecDeque<usize> = neighbors[i].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            match labels[q] {
                Some(ClusterLabel::Cluster(_)) => continue,
                Some(ClusterLabel::Noise) => labels[q] = Some(ClusterLabel::Cluster(id)),
                None => {
                    labels[q] = Some(ClusterLabel::Cluster(id));
                    if core[q] {
                        queue.extend(neighbors[q].iter().copied());
                    }
                }
            }
        }
    }
    labels.into_iter().map(|l| l.expect("every point labeled")).collect()
}

pub fn dbscan_points(points: &[GeoPoint], params: &DbscanParams) -> Vec<ClusterLabel> {
    let earth = EarthModel::default();
    dbscan_by(points.len(), |i, j| haversine_distance(&points[i], &points[j], &earth), params)
}

/// DBSCAN on detection centroids with haversine distance.
pub fn dbscan_haversine(points: &[ProjectedDetection], params: &DbscanParams) -> Vec<ClusterLabel> {
    let centroids: Vec<GeoPoint> = points.iter().map(|p| p.centroid).collect();
    dbscan_points(&centroids, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectEvent {
    pub id: String,
    pub class_id: String,
    pub confidence: f64,
    pub peak_temp_c: f64,
    pub centroid: GeoPoint,
    pub polygon: GeoPolygon,
    pub member_ids: Vec<String>,
    pub media: MediaRef,
    /// Raster estimate of hull area not covered by any member, square meters.
    pub hull_excess_m2: f64,
}

fn turn(o: &EnuOffset, a: &EnuOffset, b: &EnuOffset) -> f64 {
    (a.east - o.east) * (b.north - o.north) - (a.north - o.north) * (b.east - o.east)
}

/// Andrew's monotone chain; counter-clockwise in east/north, collinear points dropped.
pub fn convex_hull(points: &[EnuOffset]) -> Vec<EnuOffset> {
    convex_hull_indices(points).into_iter().map(|i| points[i]).collect()
}

/// Indices of the hull vertices of `points`, counter-clockwise.
pub fn convex_hull_indices(points: &[EnuOffset]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        let (a, b) = (&points[a], &points[b]);
        a.east.total_cmp(&b.east).then(a.north.total_cmp(&b.north))
    });
    idx.dedup_by(|a, b| points[*a].east == points[*b].east && points[*a].north == points[*b].north);
    if idx.len() < 3 {
        return idx;
    }
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for pass in 0..2 {
        let start = hull.len();
        let order: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(idx.iter())
        } else {
            Box::new(idx.iter().rev())
        };
        for &p in order {
            while hull.len() >= start + 2
                && turn(&points[hull[hull.len() - 2]], &points[hull[hull.len() - 1]], &points[p]) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn inside(ring: &[EnuOffset], e: f64, n: f64) -> bool {
    let mut c = false;
    let k = ring.len();
    for i in 0..k {
        let (a, b) = (&ring[i], &ring[(i + k - 1) % k]);
        if (a.north > n) != (b.north > n) && e < (b.east - a.east) * (n - a.north) / (b.north - a.north) + a.east {
            c = !c;
        }
    }
    c
}

const EXCESS_GRID: usize = 100;

fn hull_excess(hull: &[EnuOffset], members: &[Vec<EnuOffset>]) -> f64 {
    let (mut e0, mut e1, mut n0, mut n1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in hull {
        e0 = e0.min(p.east);
        e1 = e1.max(p.east);
        n0 = n0.min(p.north);
        n1 = n1.max(p.north);
    }
    let (de, dn) = ((e1 - e0) / EXCESS_GRID as f64, (n1 - n0) / EXCESS_GRID as f64);
    let mut uncovered = 0usize;
    for i in 0..EXCESS_GRID {
        for j in 0..EXCESS_GRID {
            let (e, n) = (e0 + (i as f64 + 0.5) * de, n0 + (j as f64 + 0.5) * dn);
            if inside(hull, e, n) && !members.iter().any(|m| inside(m, e, n)) {
                uncovered += 1;
            }
        }
    }
    uncovered as f64 * de * dn
}

/// Merges one cluster. The event id is left empty; [`deduplicate`] assigns it.
pub fn merge_cluster(members: &[&ProjectedDetection]) -> Result<DefectEvent, DedupError> {
    let first = members.first().ok_or(DedupError::EmptyCluster)?;
    let earth = EarthModel::default();
    let best = members
        .iter()
        .copied()
        .reduce(|a, b| if b.detection.confidence > a.detection.confidence { b } else { a })
        .expect("non-empty");
    let polygon = if members.len() == 1 {
        first.polygon.clone()
    } else {
        let origin = GeoPoint { alt: 0.0, ..first.centroid };
        let rings = members
            .iter()
            .map(|m| m.polygon.to_enu_at(&origin, &earth))
            .collect::<Result<Vec<_>, _>>()?;
        let all: Vec<GeoPoint> = members.iter().flat_map(|m| m.polygon.vertices().iter().copied()).collect();
        let hull = convex_hull_indices(&rings.concat());
        if hull.len() < 3 {
            first.polygon.clone()
        } else {
            // reuse the member vertices so the hull is exact in WGS84 as well
            GeoPolygon::new(hull.iter().map(|&i| all[i]).collect())?
        }
    };
    let hull_excess_m2 = if members.len() == 1 {
        0.0
    } else {
        let origin = polygon.vertices()[0];
        let hull = polygon.to_enu_at(&origin, &earth)?;
        let rings = members
            .iter()
            .map(|m| m.polygon.to_enu_at(&origin, &earth))
            .collect::<Result<Vec<_>, _>>()?;
        hull_excess(&hull, &rings)
    };
    Ok(DefectEvent {
        id: String::new(),
        class_id: first.detection.class_id.clone(),
        confidence: members.iter().map(|m| m.detection.confidence).fold(f64::NEG_INFINITY, f64::max),
        peak_temp_c: members.iter().map(|m| m.detection.peak_temp_c).fold(f64::NEG_INFINITY, f64::max),
        centroid: polygon_centroid(&polygon, &earth)?.point,
        polygon,
        member_ids: members.iter().map(|m| m.id.clone()).collect(),
        media: best.media.clone(),
        hull_excess_m2,
    })
}

/// Per-class DBSCAN, one event per cluster and per noise point.
pub fn deduplicate(detections: &[ProjectedDetection], params: &DbscanParams) -> Result<Vec<DefectEvent>, DedupError> {
    params.validate()?;
    let mut by_class: BTreeMap<&str, Vec<&ProjectedDetection>> = BTreeMap::new();
    for d in detections {
        by_class.entry(d.detection.class_id.as_str()).or_default().push(d);
    }
    let mut events = Vec::new();
    for members in by_class.values() {
        let centroids: Vec<GeoPoint> = members.iter().map(|m| m.centroid).collect();
        let labels = dbscan_points(&centroids, params);
        let mut clusters: BTreeMap<usize, Vec<&ProjectedDetection>> = BTreeMap::new();
        for (m, label) in members.iter().zip(&labels) {
            match label {
                ClusterLabel::Cluster(c) => clusters.entry(*c).or_default().push(m),
                ClusterLabel::Noise => events.push(merge_cluster(&[m])?),
            }
        }
        for group in clusters.values() {
            events.push(merge_cluster(group)?);
        }
    }
    events.sort_by(|a, b| {
        a.class_id
            .cmp(&b.class_id)
            .then(a.centroid.lat.total_cmp(&b.centroid.lat))
            .then(a.centroid.lon.total_cmp(&b.centroid.lon))
    });
    for (i, e) in events.iter_mut().enumerate() {
        e.id = format!("clu_{i:03}");
    }
    Ok(events)
}

/// Something with a class and a ground location.
pub trait Located {
    fn class_id(&self) -> &str;
    fn location(&self) -> GeoPoint;
}

impl Located for ProjectedDetection {
    fn class_id(&self) -> &str {
        &self.detection.class_id
    }
    fn location(&self) -> GeoPoint {
        self.centroid
    }
}

impl Located for DefectEvent {
    fn class_id(&self) -> &str {
        &self.class_id
    }
    fn location(&self) -> GeoPoint {
        self.centroid
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPoint {
    pub id: String,
    pub class_id: String,
    pub location: GeoPoint,
}

impl Located for GroundTruthPoint {
    fn class_id(&self) -> &str {
        &self.class_id
    }
    fn location(&self) -> GeoPoint {
        self.location
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DupFpReport {
    pub items: usize,
    /// Ground-truth defects with at least one match.
    pub matched_gt: usize,
    /// Matches beyond the first per ground-truth defect.
    pub duplicates: usize,
    /// Items with no same-class ground truth within the radius.
    pub unmatched: usize,
    /// `duplicates / items`.
    pub rate: f64,
    /// `duplicates / (duplicates + unmatched)`.
    pub rate_of_false_positives: f64,
}

/// Matches each item to its nearest same-class ground truth within `match_radius`.
pub fn match_to_ground_truth<T: Located, G: Located>(items: &[T], gt: &[G], match_radius: f64) -> Vec<Option<usize>> {
    let earth = EarthModel::default();
    items
        .iter()
        .map(|it| {
            let loc = it.location();
            gt.iter()
                .enumerate()
                .filter(|(_, g)| g.class_id() == it.class_id())
                .map(|(k, g)| (k, haversine_distance(&loc, &g.location(), &earth)))
                .filter(|&(_, d)| d <= match_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
        })
        .collect()
}

pub fn dup_fp_report<T: Located, G: Located>(items: &[T], gt: &[G], match_radius: f64) -> DupFpReport {
    let matches = match_to_ground_truth(items, gt, match_radius);
    let mut per_gt = vec![0usize; gt.len()];
    let mut unmatched = 0;
    for m in &matches {
        match m {
            Some(k) => per_gt[*k] += 1,
            None => unmatched += 1,
        }
    }
    let duplicates: usize = per_gt.iter().map(|&m| m.saturating_sub(1)).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    DupFpReport {
        items: items.len(),
        matched_gt: per_gt.iter().filter(|&&m| m > 0).count(),
        duplicates,
        unmatched,
        rate: ratio(duplicates, items.len()),
        rate_of_false_positives: ratio(duplicates, duplicates + unmatched),
    }
}

pub fn dup_fp_rate<T: Located, G: Located>(items: &[T], gt: &[G], match_radius: f64) -> f64 {
    dup_fp_report(items, gt, match_radius).rate
}

/// Area of an event polygon in square meters.
pub fn event_area_m2(e: &DefectEvent) -> f64 {
    e.polygon
        .to_enu(&EarthModel::default())
        .map(|r| shoelace(&r).abs())
        .unwrap_or(f64::NAN)
}
