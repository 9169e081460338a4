//! Nadir lawnmower survey planning.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{CameraConfig, PlantLayout, SimError};
use crate::geodesy::EnuOffset;
use crate::geoprojection::UavPose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlightPlan {
    /// Meters above the module plane.
    pub altitude: f64,
    /// Ground speed, m/s.
    pub speed: f64,
    pub along_overlap: f64,
    pub cross_overlap: f64,
}

impl Default for FlightPlan {
    fn default() -> Self {
        Self {
            altitude: 10.0,
            speed: 5.0,
            along_overlap: 0.7,
            cross_overlap: 0.3,
        }
    }
}

impl FlightPlan {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.altitude > 0.0 && self.altitude.is_finite()) {
            return Err(SimError::Config("altitude must be positive".into()));
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(SimError::Config("speed must be positive".into()));
        }
        for (name, o) in [("along_overlap", self.along_overlap), ("cross_overlap", self.cross_overlap)] {
            if !(0.0..1.0).contains(&o) {
                return Err(SimError::Config(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }

    /// Minimum number of frames that see any in-footprint ground point.
    pub fn frames_per_point(&self) -> usize {
        (1.0 / (1.0 - self.along_overlap) - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub index: usize,
    pub line: usize,
    /// Seconds since mission start.
    pub t_s: f64,
    /// Camera position relative to the plant origin (up = height above the modules).
    pub enu: EnuOffset,
    pub pose: UavPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightPath {
    pub waypoints: Vec<Waypoint>,
    /// `(cross-track, along-track)` ground footprint, meters.
    pub footprint: (f64, f64),
    pub line_spacing: f64,
    pub photo_spacing: f64,
    pub frame_interval_s: f64,
    pub duration_s: f64,
}

/// Centers from `first` in `step` increments until one reaches `last`.
fn centers(first: f64, last: f64, step: f64) -> Vec<f64> {
    let mut v = vec![first];
    while v[v.len() - 1] < last - 1e-9 * step.max(1.0) {
        v.push(first + v.len() as f64 * step);
    }
    v
}

/// Lines run north-south and alternate direction; lines are centered across
/// the plant. The along-track spacing is `footprint / ceil(1 / (1 - overlap))`,
/// so every ground point inside a line's swath is seen by at least that many
/// consecutive frames.
pub fn plan_flight(layout: &PlantLayout, plan: &FlightPlan, camera: &CameraConfig) -> Result<FlightPath, SimError> {
    layout.validate()?;
    plan.validate()?;
    camera.validate()?;
    let k = &camera.intrinsics;
    let fw = plan.altitude * camera.width as f64 / k.fx;
    let fh = plan.altitude * camera.height as f64 / k.fy;
    let (extent_e, extent_n) = layout.extent();

    let line_spacing = fw * (1.0 - plan.cross_overlap);
    let n_lines = if extent_e <= fw {
        1
    } else {
        ((extent_e - fw) / line_spacing - 1e-9).ceil() as usize + 1
    };
    let first_line = extent_e / 2.0 - (n_lines - 1) as f64 * line_spacing / 2.0;

    let n = plan.frames_per_point();
    let spacing = fh / n as f64;
    let along = centers(-fh / 2.0 + spacing / 2.0, extent_n + fh / 2.0 - spacing / 2.0, spacing);

    let interval = spacing / plan.speed;
    let turn = line_spacing / plan.speed;
    let mut waypoints = Vec::with_capacity(n_lines * along.len());
    let mut t = 0.0;
    for line in 0..n_lines {
        let east = first_line + line as f64 * line_spacing;
        let northbound = line % 2 == 0;
        let yaw = if northbound { 0.0 } else { PI };
        for j in 0..along.len() {
            let north = if northbound { along[j] } else { along[along.len() - 1 - j] };
            let enu = EnuOffset::new(east, north, plan.altitude);
            let mut position = layout.to_geo(&EnuOffset::new(east, north, 0.0));
            position.alt = layout.elevation + plan.altitude;
            waypoints.push(Waypoint {
                index: waypoints.len(),
                line,
                t_s: t,
                enu,
                pose: UavPose::nadir(position, yaw),
            });
            t += interval;
        }
        t += turn - interval;
    }
    let duration_s = waypoints.last().map_or(0.0, |w| w.t_s + interval);
    Ok(FlightPath {
        waypoints,
        footprint: (fw, fh),
        line_spacing,
        photo_spacing: spacing,
        frame_interval_s: interval,
        duration_s,
    })
}
