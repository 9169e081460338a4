//! Pixel to WGS84 projection by intersecting camera rays with a flat ground plane.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::Detection;
use crate::geodesy::{enu_to_geo, polygon_centroid, EarthModel, EnuOffset, GeoError, GeoPoint, GeoPolygon};
use crate::reacquisition::{backproject, CameraIntrinsics, GimbalAngles, Pointing, RotationMatrix, Vec3};
use crate::telemetry::MediaRef;

/// Rays closer than this to the horizon are rejected.
pub const MIN_INCIDENCE_DEG: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("ray points at or above the horizon")]
    NoIntersection,
    #[error("ray meets the ground {0:.2} deg from horizontal")]
    Grazing(f64),
    #[error("camera is {0:.2} m above the ground plane")]
    BelowPlane(f64),
    #[error("corner {corner}: {source}")]
    Corner { corner: usize, source: Box<ProjectionError> },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Body attitude in NED, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    pub fn rotation(&self) -> RotationMatrix {
        RotationMatrix::from_ypr(self.yaw, self.pitch, self.roll)
    }
}

/// Pose packet; `position.alt` is height above the ground plane's datum (AGL).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavPose {
    pub position: GeoPoint,
    pub attitude: Attitude,
    pub gimbal: GimbalAngles,
}

impl UavPose {
    /// Level flight, nadir gimbal.
    pub fn nadir(position: GeoPoint, yaw: f64) -> Self {
        Self {
            position,
            attitude: Attitude {
                yaw,
                ..Default::default()
            },
            gimbal: GimbalAngles {
                pitch: -std::f64::consts::FRAC_PI_2,
                ..Default::default()
            },
        }
    }

    pub fn pointing(&self, k: &CameraIntrinsics) -> Pointing {
        Pointing {
            intrinsics: *k,
            body: self.attitude.rotation(),
            gimbal: self.gimbal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundPlane {
    pub elevation: f64,
}

/// `R_body(attitude) * R_gimbal * R_cam->gimbal`.
pub fn camera_to_world_rotation(pose: &UavPose) -> RotationMatrix {
    // intrinsics do not enter the rotation
    let k = CameraIntrinsics {
        fx: 1.0,
        fy: 1.0,
        cx: 0.0,
        cy: 0.0,
    };
    pose.pointing(&k).camera_to_world()
}

/// NED ground offset from the point beneath the UAV.
pub fn ray_ground_offset(dir: &Vec3, height: f64) -> Result<EnuOffset, ProjectionError> {
    if !(height > 0.0) {
        return Err(ProjectionError::BelowPlane(height));
    }
    if dir.z <= 0.0 {
        return Err(ProjectionError::NoIntersection);
    }
    let incidence = (dir.z / dir.norm()).asin().to_degrees();
    if incidence < MIN_INCIDENCE_DEG {
        return Err(ProjectionError::Grazing(incidence));
    }
    let t = height / dir.z;
    Ok(EnuOffset::new(t * dir.y, t * dir.x, 0.0))
}

fn ground_origin(pose: &UavPose, plane: &GroundPlane) -> GeoPoint {
    GeoPoint {
        alt: plane.elevation,
        ..pose.position
    }
}

/// ENU offset of the ground point seen at pixel `(u, v)`, relative to the nadir point.
pub fn pixel_to_ground_enu(
    u: f64,
    v: f64,
    k: &CameraIntrinsics,
    pose: &UavPose,
    plane: &GroundPlane,
) -> Result<EnuOffset, ProjectionError> {
    let dir = camera_to_world_rotation(pose).apply(&backproject(u, v, k));
    ray_ground_offset(&dir, pose.position.alt - plane.elevation)
}

pub fn pixel_to_ground(
    u: f64,
    v: f64,
    k: &CameraIntrinsics,
    pose: &UavPose,
    plane: &GroundPlane,
) -> Result<GeoPoint, ProjectionError> {
    let off = pixel_to_ground_enu(u, v, k, pose, plane)?;
    Ok(enu_to_geo(&ground_origin(pose, plane), &off, &EarthModel::default())?)
}

/// Per-frame provenance attached to every projected detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameContext {
    pub frame_id: u64,
    pub timestamp: DateTime<Utc>,
    pub media: MediaRef,
}

/// A detection located on the ground. This is also the line-delimited
/// interchange record consumed by offline de-duplication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectedDetection {
    pub id: String,
    pub detection: Detection,
    pub polygon: GeoPolygon,
    pub centroid: GeoPoint,
    pub frame_id: u64,
    pub timestamp: DateTime<Utc>,
    pub media: MediaRef,
}

/// Projects the four bbox corners (TL, TR, BR, BL) and recomputes the centroid.
pub fn project_detection(
    det: &Detection,
    index: usize,
    k: &CameraIntrinsics,
    pose: &UavPose,
    plane: &GroundPlane,
    ctx: &FrameContext,
) -> Result<ProjectedDetection, ProjectionError> {
    let earth = EarthModel::default();
    let vertices = det
        .bbox
        .corners()
        .iter()
        .enumerate()
        .map(|(corner, &(u, v))| {
            pixel_to_ground(u, v, k, pose, plane).map_err(|e| ProjectionError::Corner {
                corner,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let polygon = GeoPolygon::new(vertices)?;
    let centroid = polygon_centroid(&polygon, &earth)?.point;
    Ok(ProjectedDetection {
        id: format!("f{:06}_d{:03}", ctx.frame_id, index),
        detection: det.clone(),
        polygon,
        centroid,
        frame_id: ctx.frame_id,
        timestamp: ctx.timestamp,
        media: ctx.media.clone(),
    })
}

/// Projects a frame's detections, logging and counting the ones that fail.
pub fn project_frame(
    dets: &[Detection],
    k: &CameraIntrinsics,
    pose: &UavPose,
    plane: &GroundPlane,
    ctx: &FrameContext,
) -> (Vec<ProjectedDetection>, usize) {
    let mut out = Vec::with_capacity(dets.len());
    let mut dropped = 0;
    for (i, d) in dets.iter().enumerate() {
        match project_detection(d, i, k, pose, plane, ctx) {
            Ok(p) => out.push(p),
            Err(e) => {
                log::warn!("frame {} detection {i} dropped: {e}", ctx.frame_id);
                dropped += 1;
            }
        }
    }
    (out, dropped)
}
