//! Synthetic plant layout and ground-truth defects.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{stream, SimError, Stream};
use crate::dedup::GroundTruthPoint;
use crate::geodesy::{enu_to_geo, EarthModel, EnuOffset, GeoPoint};

/// Ten fault labels used for ground truth and detections.
pub const TAXONOMY: [&str; 10] = [
    "hotspot_single",
    "hotspot_multi",
    "diode_bypass",
    "cell_single",
    "cell_multi",
    "crack",
    "soiling",
    "shadow",
    "junction_box",
    "string_open",
];

/// Module grid. Row index grows north, column index grows east, and the
/// origin is the south-west corner of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantLayout {
    pub origin: GeoPoint,
    pub rows: usize,
    pub cols: usize,
    /// `(width east, height north)` in meters.
    pub module_size: [f64; 2],
    /// `(row, col)` spacing in meters.
    pub pitch: [f64; 2],
    pub elevation: f64,
}

impl Default for PlantLayout {
    fn default() -> Self {
        Self {
            origin: GeoPoint {
                lat: 49.4072,
                lon: 26.9841,
                alt: 0.0,
            },
            rows: 10,
            cols: 10,
            module_size: [0.9, 0.9],
            pitch: [1.0, 1.0],
            elevation: 0.0,
        }
    }
}

impl PlantLayout {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SimError::Config("plant must have at least one module".into()));
        }
        let [w, h] = self.module_size;
        let [pr, pc] = self.pitch;
        if !(w > 0.0 && h > 0.0 && pr >= h && pc >= w) {
            return Err(SimError::Config("module size must be positive and no larger than the pitch".into()));
        }
        if !self.elevation.is_finite() {
            return Err(SimError::Config("elevation must be finite".into()));
        }
        GeoPoint::new(self.origin.lat, self.origin.lon, self.origin.alt).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    /// `(east, north)` extent in meters.
    pub fn extent(&self) -> (f64, f64) {
        (self.cols as f64 * self.pitch[1], self.rows as f64 * self.pitch[0])
    }

    pub fn module_center(&self, index: usize) -> EnuOffset {
        let (r, c) = (index / self.cols, index % self.cols);
        EnuOffset::new((c as f64 + 0.5) * self.pitch[1], (r as f64 + 0.5) * self.pitch[0], 0.0)
    }

    pub fn to_geo(&self, off: &EnuOffset) -> GeoPoint {
        let origin = GeoPoint {
            alt: self.elevation,
            ..self.origin
        };
        enu_to_geo(&origin, off, &EarthModel::default()).expect("plant-scale offsets are in range")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectSpec {
    /// Exact number of defects; when absent each module is defective with `density`.
    pub count: Option<usize>,
    pub density: f64,
    /// Minimum center-to-center distance between defects, meters.
    pub min_separation_m: f64,
    /// Relative class frequencies.
    pub class_weights: Vec<(String, f64)>,
    pub excess_c: [f64; 2],
    pub sigma_m: [f64; 2],
}

impl Default for DefectSpec {
    fn default() -> Self {
        let weights = [0.45, 0.2, 0.1, 0.1, 0.025, 0.025, 0.025, 0.025, 0.025, 0.025];
        Self {
            count: Some(8),
            density: 0.08,
            min_separation_m: 2.5,
            class_weights: TAXONOMY.iter().zip(weights).map(|(c, w)| (c.to_string(), w)).collect(),
            excess_c: [16.0, 35.0],
            sigma_m: [0.04, 0.15],
        }
    }
}

impl DefectSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.density > 0.0 && self.density <= 1.0) && self.count.is_none() {
            return Err(SimError::Config("defect density must be in (0, 1]".into()));
        }
        if self.class_weights.is_empty() || self.class_weights.iter().any(|(_, w)| !(*w >= 0.0)) {
            return Err(SimError::Config("class weights must be non-negative and non-empty".into()));
        }
        if !(self.excess_c[0] > 0.0 && self.excess_c[0] <= self.excess_c[1]) {
            return Err(SimError::Config("excess temperature range must be positive and ordered".into()));
        }
        if !(self.sigma_m[0] > 0.0 && self.sigma_m[0] <= self.sigma_m[1]) {
            return Err(SimError::Config("defect sigma range must be positive and ordered".into()));
        }
        if !(self.min_separation_m >= 0.0) {
            return Err(SimError::Config("min_separation_m must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDefect {
    pub id: String,
    pub module: usize,
    pub class_id: String,
    /// Offset from the module center, meters.
    pub offset: [f64; 2],
    pub excess_c: f64,
    pub sigma_m: f64,
    /// Position relative to the plant origin.
    pub enu: EnuOffset,
    pub location: GeoPoint,
}

impl GroundTruthDefect {
    pub fn as_point(&self) -> GroundTruthPoint {
        GroundTruthPoint {
            id: self.id.clone(),
            class_id: self.class_id.clone(),
            location: self.location,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Places defects on distinct modules, at most one per module.
pub fn generate_plant(seed: u64, layout: &PlantLayout, spec: &DefectSpec) -> Result<Vec<GroundTruthDefect>, SimError> {
    layout.validate()?;
    spec.validate()?;
    let mut rng = stream(seed, Stream::Plant, 0);
    let n = layout.rows * layout.cols;
    let classes = WeightedIndex::new(spec.class_weights.iter().map(|(_, w)| *w))
        .map_err(|e| SimError::Config(format!("class weights: {e}")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let target = match spec.count {
        Some(k) => k,
        None => order.iter().filter(|_| rng.random_bool(spec.density)).count(),
    };
    let mut out: Vec<GroundTruthDefect> = Vec::with_capacity(target);
    for module in order {
        if out.len() == target {
            break;
        }
        let center = layout.module_center(module);
        let sigma_m = uniform(&mut rng, spec.sigma_m);
        let excess_c = uniform(&mut rng, spec.excess_c);
        let class_id = spec.class_weights[classes.sample(&mut rng)].0.clone();
        let offset = [
            rng.random_range(-0.35..0.35) * layout.module_size[0],
            rng.random_range(-0.35..0.35) * layout.module_size[1],
        ];
        let enu = EnuOffset::new(center.east + offset[0], center.north + offset[1], 0.0);
        let too_close = out
            .iter()
            .any(|d| (d.enu.east - enu.east).hypot(d.enu.north - enu.north) < spec.min_separation_m);
        if too_close {
            continue;
        }
        out.push(GroundTruthDefect {
            id: format!("gt_{:03}", out.len()),
            module,
            class_id,
            offset,
            excess_c,
            sigma_m,
            enu,
            location: layout.to_geo(&enu),
        });
    }
    if out.len() < target {
        return Err(SimError::Config(format!(
            "could only place {} of {target} defects with {} m separation",
            out.len(),
            spec.min_separation_m
        )));
    }
    Ok(out)
}
