//! Closed-loop re-pointing of the camera at a low-confidence detection.
//!
//! Frames: the world frame is North-East-Down. The camera frame has +z along
//! the optical axis, +x to the image right and +y to the image bottom. At
//! zero gimbal angles the optical axis is the body +x (forward) axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::Detection;

pub type Vec3 = Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;
const PARALLEL_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReacqError {
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NotRotation(f64),
    #[error("axis must be a unit vector")]
    Axis,
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("target is behind the camera")]
    BehindCamera,
    #[error("round {round} exceeds max_rounds {max}")]
    Round { round: u32, max: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = ReacqError;
    fn try_from(r: RawIntrinsics) -> Result<Self, ReacqError> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy)
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, ReacqError> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(ReacqError::Intrinsics(format!("focal lengths must be positive, got fx={fx} fy={fy}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(ReacqError::Intrinsics("principal point must be finite".into()));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Pinhole projection of a camera-frame direction.
    pub fn project(&self, v: &Vec3) -> Result<(f64, f64), ReacqError> {
        if v.z <= 0.0 {
            return Err(ReacqError::BehindCamera);
        }
        Ok((self.cx + self.fx * v.x / v.z, self.cy + self.fy * v.y / v.z))
    }
}

/// Unit line of sight through pixel `(u, v)` in the camera frame.
pub fn backproject(u: f64, v: f64, k: &CameraIntrinsics) -> Vec3 {
    Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalize()
}

/// A 3x3 matrix checked to be orthonormal with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn new(m: Matrix3<f64>) -> Result<Self, ReacqError> {
        let err = (m.transpose() * m - Matrix3::identity()).abs().max();
        if !err.is_finite() || err > ORTHONORMAL_TOL {
            return Err(ReacqError::NotRotation(err));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(ReacqError::NotRotation((det - 1.0).abs()));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// `I + sin(t) [k]x + (1 - cos(t)) [k]x^2`.
    pub fn from_axis_angle(aa: &AxisAngle) -> Self {
        let k = aa.axis;
        let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
        Self(Matrix3::identity() + kx * aa.angle.sin() + kx * kx * (1.0 - aa.angle.cos()))
    }

    pub fn rot_x(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Aerospace Z-Y-X sequence: `Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_ypr(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::rot_z(yaw).then(&Self::rot_y(pitch)).then(&Self::rot_x(roll))
    }

    /// `self * other`.
    pub fn then(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }
}

/// Fixed mounting: camera (right, down, optical) to gimbal (forward, right, down).
pub fn camera_to_gimbal() -> RotationMatrix {
    RotationMatrix(Matrix3::new(0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0))
}

/// Rotate a camera-frame direction into the world frame.
pub fn to_world(v: &Vec3, r: &RotationMatrix) -> Vec3 {
    r.apply(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisAngle {
    pub axis: Vec3,
    pub angle: f64,
}

impl AxisAngle {
    pub fn new(axis: Vec3, angle: f64) -> Result<Self, ReacqError> {
        if !angle.is_finite() || (angle != 0.0 && (axis.norm() - 1.0).abs() > 1e-12) {
            return Err(ReacqError::Axis);
        }
        Ok(Self { axis, angle })
    }
}

/// Smallest rotation taking unit `c` onto unit `target`.
pub fn solve_axis_angle(c: &Vec3, target: &Vec3) -> AxisAngle {
    let cross = c.cross(target);
    let s = cross.norm();
    let d = c.dot(target);
    if s < PARALLEL_EPS {
        if d > 0.0 {
            return AxisAngle {
                axis: Vec3::z(),
                angle: 0.0,
            };
        }
        let project = |e: Vec3| e - c * c.dot(&e);
        let mut axis = project(Vec3::x());
        if axis.norm() < 1e-6 {
            axis = project(Vec3::y());
        }
        return AxisAngle {
            axis: axis.normalize(),
            angle: std::f64::consts::PI,
        };
    }
    AxisAngle {
        axis: cross / s,
        angle: s.atan2(d),
    }
}

/// Rotate `c` about `aa.axis` by `aa.angle`.
pub fn rodrigues_rotate(c: &Vec3, aa: &AxisAngle) -> Vec3 {
    let k = &aa.axis;
    let (s, co) = aa.angle.sin_cos();
    c * co + k.cross(c) * s + k * (k.dot(c) * (1.0 - co))
}

/// Gimbal angles relative to the body, radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GimbalAngles {
    pub pitch: f64,
    pub yaw: f64,
    pub roll: f64,
}

impl GimbalAngles {
    pub fn rotation(&self) -> RotationMatrix {
        RotationMatrix::from_ypr(self.yaw, self.pitch, self.roll)
    }

    pub fn apply(&self, cmd: &GimbalCommand) -> Self {
        Self {
            pitch: self.pitch + cmd.delta_pitch,
            yaw: wrap_pi(self.yaw + cmd.delta_yaw),
            roll: self.roll,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GimbalCommand {
    pub delta_pitch: f64,
    pub delta_yaw: f64,
}

/// Mechanical range of the gimbal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GimbalLimits {
    pub min_pitch: f64,
    pub max_pitch: f64,
    /// Largest single-step yaw slew.
    pub max_yaw_step: f64,
}

impl Default for GimbalLimits {
    fn default() -> Self {
        Self {
            min_pitch: -std::f64::consts::FRAC_PI_2,
            max_pitch: std::f64::consts::FRAC_PI_6,
            max_yaw_step: std::f64::consts::PI,
        }
    }
}

impl GimbalLimits {
    pub fn clamp(&self, current: &GimbalAngles, cmd: GimbalCommand) -> GimbalCommand {
        let pitch = (current.pitch + cmd.delta_pitch).clamp(self.min_pitch, self.max_pitch);
        GimbalCommand {
            delta_pitch: pitch - current.pitch,
            delta_yaw: cmd.delta_yaw.clamp(-self.max_yaw_step, self.max_yaw_step),
        }
    }
}

pub fn wrap_pi(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w < -PI {
        w + TAU
    } else {
        w
    }
}

/// Pitch/yaw deltas pointing the boresight along `c_new` (NED, in the
/// frame `current` is expressed in). Straight down leaves yaw untouched.
pub fn to_gimbal_command(c_new: &Vec3, current: &GimbalAngles) -> GimbalCommand {
    let horizontal = c_new.x.hypot(c_new.y);
    let target_pitch = (-c_new.z).atan2(horizontal);
    let delta_yaw = if horizontal < PARALLEL_EPS {
        0.0
    } else {
        wrap_pi(c_new.y.atan2(c_new.x) - current.yaw)
    };
    GimbalCommand {
        delta_pitch: wrap_pi(target_pitch - current.pitch),
        delta_yaw,
    }
}

/// Current camera pointing: body attitude plus gimbal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pointing {
    pub intrinsics: CameraIntrinsics,
    pub body: RotationMatrix,
    pub gimbal: GimbalAngles,
}

impl Pointing {
    pub fn camera_to_world(&self) -> RotationMatrix {
        self.body.then(&self.gimbal.rotation()).then(&camera_to_gimbal())
    }

    pub fn boresight(&self) -> Vec3 {
        self.camera_to_world().apply(&Vec3::z())
    }

    /// Pixel at which a world direction appears.
    pub fn reproject(&self, world_dir: &Vec3) -> Result<(f64, f64), ReacqError> {
        self.intrinsics.project(&self.camera_to_world().transpose().apply(world_dir))
    }
}

/// Every intermediate of one centering solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteringSolution {
    /// Camera-frame line of sight to the pixel.
    pub v: Vec3,
    /// World-frame line of sight.
    pub c: Vec3,
    /// Current world boresight.
    pub boresight: Vec3,
    pub rotation: AxisAngle,
    /// Boresight after the rotation; equals `c`.
    pub c_new: Vec3,
    pub command: GimbalCommand,
    /// Distance of the target from the principal point after the command, pixels.
    pub reprojection_error_px: f64,
}

/// Command that moves pixel `(u, v)` to the principal point.
pub fn centering_command(u: f64, v: f64, pointing: &Pointing) -> Result<CenteringSolution, ReacqError> {
    let v_cam = backproject(u, v, &pointing.intrinsics);
    let c = to_world(&v_cam, &pointing.camera_to_world());
    let boresight = pointing.boresight();
    let rotation = solve_axis_angle(&boresight, &c);
    let c_new = rodrigues_rotate(&boresight, &rotation);
    let c_body = pointing.body.transpose().apply(&c_new);
    let command = to_gimbal_command(&c_body, &pointing.gimbal);
    let after = Pointing {
        gimbal: pointing.gimbal.apply(&command),
        ..*pointing
    };
    let (pu, pv) = after.reproject(&c)?;
    let k = &pointing.intrinsics;
    Ok(CenteringSolution {
        v: v_cam,
        c,
        boresight,
        rotation,
        c_new,
        command,
        reprojection_error_px: (pu - k.cx).hypot(pv - k.cy),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReacqPolicy {
    pub tau_ra: f64,
    /// Detections smaller than this fraction of the frame are "small".
    pub min_area_frac: f64,
    pub max_rounds: u32,
}

impl Default for ReacqPolicy {
    fn default() -> Self {
        Self {
            tau_ra: 0.5,
            min_area_frac: 0.005,
            max_rounds: 2,
        }
    }
}

impl ReacqPolicy {
    pub fn validate(&self) -> Result<(), ReacqError> {
        if !(self.tau_ra > 0.0 && self.tau_ra < 1.0) {
            return Err(ReacqError::Policy(format!("tau_ra must be in (0,1), got {}", self.tau_ra)));
        }
        if !(self.min_area_frac.is_finite() && self.min_area_frac >= 0.0) {
            return Err(ReacqError::Policy("min_area_frac must be a non-negative fraction".into()));
        }
        if self.max_rounds < 1 {
            return Err(ReacqError::Policy("max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Accept,
    Reject,
    Reacquire(GimbalCommand),
}

/// Accept, reject or re-point for one detection at re-acquisition `round`.
pub fn reacquisition_decision(
    det: &Detection,
    frame_area: f64,
    policy: &ReacqPolicy,
    round: u32,
    pointing: &Pointing,
) -> Result<Decision, ReacqError> {
    if round > policy.max_rounds {
        return Err(ReacqError::Round {
            round,
            max: policy.max_rounds,
        });
    }
    if det.confidence >= policy.tau_ra {
        return Ok(Decision::Accept);
    }
    let small = det.bbox.area() / frame_area < policy.min_area_frac;
    if small && round < policy.max_rounds {
        let (u, v) = det.bbox.center();
        let sol = centering_command(u, v, pointing)?;
        return Ok(Decision::Reacquire(sol.command));
    }
    Ok(Decision::Reject)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::BoundingBox;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(400.0, 420.0, 160.0, 128.0).unwrap()
    }

    fn unit() -> impl Strategy<Value = Vec3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
    }

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).amax() < tol
    }

    #[test]
    fn backproject_examples() {
        let k = k();
        assert!(close(&backproject(160.0, 128.0, &k), &Vec3::z(), 1e-15));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(&backproject(560.0, 128.0, &k), &Vec3::new(s, 0.0, s), 1e-15));
        assert!(close(&backproject(160.0, 548.0, &k), &Vec3::new(0.0, s, s), 1e-15));
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rotation_validation() {
        assert!(RotationMatrix::new(Matrix3::identity() * 1.001).is_err());
        assert!(RotationMatrix::new(-Matrix3::<f64>::identity()).is_err());
        let r = RotationMatrix::from_ypr(0.3, -0.2, 0.1);
        assert!(RotationMatrix::new(*r.matrix()).is_ok());
        let z90 = RotationMatrix::rot_z(FRAC_PI_2);
        assert!(close(&to_world(&Vec3::x(), &z90), &Vec3::y(), 1e-15));
    }

    #[test]
    fn axis_angle_examples() {
        let aa = solve_axis_angle(&Vec3::x(), &Vec3::y());
        assert!(close(&aa.axis, &Vec3::z(), 1e-15));
        assert!((aa.angle - FRAC_PI_2).abs() < 1e-15);
        let same = solve_axis_angle(&Vec3::y(), &Vec3::y());
        assert_eq!((same.angle, same.axis), (0.0, Vec3::z()));
        for c in [Vec3::x(), -Vec3::x(), Vec3::new(0.6, 0.8, 0.0), Vec3::z()] {
            let aa = solve_axis_angle(&c, &-c);
            assert_eq!(aa.angle, PI);
            assert!(aa.axis.dot(&c).abs() < 1e-15);
            assert!(close(&rodrigues_rotate(&c, &aa), &-c, 1e-12));
        }
        let q = rodrigues_rotate(&Vec3::x(), &AxisAngle::new(Vec3::z(), FRAC_PI_2).unwrap());
        assert!(close(&q, &Vec3::y(), 1e-15));
        assert!(AxisAngle::new(Vec3::new(1.0, 1.0, 0.0), 0.5).is_err());
    }

    #[test]
    fn gimbal_command_examples() {
        let level = GimbalAngles::default();
        assert_eq!(to_gimbal_command(&Vec3::x(), &level), GimbalCommand::default());
        let down = to_gimbal_command(&Vec3::z(), &GimbalAngles { yaw: 1.0, ..level });
        assert_eq!(down.delta_yaw, 0.0);
        assert!((down.delta_pitch + FRAC_PI_2).abs() < 1e-15);
        let diag = to_gimbal_command(&Vec3::new(1.0, 1.0, 0.0).normalize(), &level);
        assert!((diag.delta_yaw - FRAC_PI_4).abs() < 1e-15);
        // wrap across the +-pi seam
        let back = to_gimbal_command(&Vec3::new(-1.0, -0.01, 0.0).normalize(), &GimbalAngles { yaw: 3.1, ..level });
        assert!(back.delta_yaw.abs() < 0.1);
    }

    #[test]
    fn limits_clamp_pitch() {
        let lim = GimbalLimits::default();
        let cur = GimbalAngles {
            pitch: -1.5,
            ..Default::default()
        };
        let c = lim.clamp(
            &cur,
            GimbalCommand {
                delta_pitch: -0.5,
                delta_yaw: 0.1,
            },
        );
        assert!((cur.pitch + c.delta_pitch - lim.min_pitch).abs() < 1e-15);
        assert_eq!(c.delta_yaw, 0.1);
    }

    fn pointing(roll: f64, pitch: f64, yaw: f64, gimbal_pitch: f64) -> Pointing {
        Pointing {
            intrinsics: k(),
            body: RotationMatrix::from_ypr(yaw, pitch, roll),
            gimbal: GimbalAngles {
                pitch: gimbal_pitch,
                yaw: 0.0,
                roll: 0.0,
            },
        }
    }

    #[test]
    fn centering_principal_point_is_zero_angle() {
        let sol = centering_command(160.0, 128.0, &pointing(0.0, 0.0, 0.3, -1.2)).unwrap();
        assert!(sol.rotation.angle < 1e-12);
        assert!(sol.reprojection_error_px < 1e-9);
    }

    #[test]
    fn nadir_camera_axes() {
        let p = pointing(0.0, 0.0, 0.0, -FRAC_PI_2);
        assert!(close(&p.boresight(), &Vec3::z(), 1e-15));
        // image up is north at zero yaw
        let up = p.camera_to_world().apply(&-Vec3::y());
        assert!(close(&up, &Vec3::x(), 1e-15));
        assert!(close(&pointing(0.0, 0.0, 0.0, 0.0).boresight(), &Vec3::x(), 1e-15));
    }

    #[test]
    fn decision_rule() {
        let p = pointing(0.0, 0.0, 0.0, -1.0);
        let policy = ReacqPolicy::default();
        let det = |conf, w: f64| Detection {
            bbox: BoundingBox::new(250.0, 50.0, 250.0 + w, 50.0 + w).unwrap(),
            class_id: "hotspot_single".into(),
            confidence: conf,
            peak_temp_c: 40.0,
        };
        let area = 320.0 * 256.0;
        assert_eq!(reacquisition_decision(&det(0.9, 4.0), area, &policy, 0, &p).unwrap(), Decision::Accept);
        assert_eq!(reacquisition_decision(&det(0.3, 60.0), area, &policy, 0, &p).unwrap(), Decision::Reject);
        assert_eq!(reacquisition_decision(&det(0.3, 4.0), area, &policy, 2, &p).unwrap(), Decision::Reject);
        assert!(reacquisition_decision(&det(0.3, 4.0), area, &policy, 3, &p).is_err());
        let Decision::Reacquire(cmd) = reacquisition_decision(&det(0.3, 8.0), area, &policy, 0, &p).unwrap() else {
            panic!("expected reacquire");
        };
        // oracle: re-point and reproject the bbox center
        let c = to_world(&backproject(254.0, 54.0, &p.intrinsics), &p.camera_to_world());
        let after = Pointing {
            gimbal: p.gimbal.apply(&cmd),
            ..p
        };
        let (u, v) = after.reproject(&c).unwrap();
        assert!((u - 160.0).hypot(v - 128.0) < 1.0);
    }

    #[test]
    fn policy_validation() {
        assert!(ReacqPolicy::default().validate().is_ok());
        for bad in [
            ReacqPolicy { tau_ra: 1.0, ..Default::default() },
            ReacqPolicy { max_rounds: 0, ..Default::default() },
            ReacqPolicy { min_area_frac: -0.1, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn rodrigues_preserves_norm(c in unit(), k in unit(), scale in 0.1f64..10.0, t in -4.0f64..4.0) {
            let v = c * scale;
            let r = rodrigues_rotate(&v, &AxisAngle { axis: k, angle: t });
            prop_assert!((r.norm() - v.norm()).abs() < 1e-12 * scale.max(1.0));
        }

        #[test]
        fn solve_then_rotate_hits_target(c in unit(), t in unit()) {
            let aa = solve_axis_angle(&c, &t);
            prop_assert!((0.0..=PI).contains(&aa.angle));
            prop_assert!(close(&rodrigues_rotate(&c, &aa), &t, 1e-10));
        }

        #[test]
        fn near_parallel_pairs(c in unit(), d in unit(), eps in 1e-9f64..1e-6) {
            let t = (c + d.cross(&c) * eps).normalize();
            let aa = solve_axis_angle(&c, &t);
            prop_assert!(close(&rodrigues_rotate(&c, &aa), &t, 1e-10));
        }

        #[test]
        fn composition_adds_angles(c in unit(), k in unit(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let two = rodrigues_rotate(&rodrigues_rotate(&c, &AxisAngle { axis: k, angle: a }), &AxisAngle { axis: k, angle: b });
            let one = rodrigues_rotate(&c, &AxisAngle { axis: k, angle: a + b });
            prop_assert!(close(&two, &one, 1e-11));
        }

        #[test]
        fn world_rotation_preserves_unit_norm(v in unit(), k in unit(), t in -PI..PI) {
            let r = RotationMatrix::from_axis_angle(&AxisAngle { axis: k, angle: t });
            prop_assert!(RotationMatrix::new(*r.matrix()).is_ok());
            prop_assert!((to_world(&v, &r).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn one_round_recenters(
            u in 5.0f64..315.0, v in 5.0f64..251.0,
            roll in -0.2f64..0.2, pitch in -0.2f64..0.2, yaw in -PI..PI,
            gp in -1.5f64..-0.3,
        ) {
            let sol = centering_command(u, v, &pointing(roll, pitch, yaw, gp)).unwrap();
            prop_assert!(sol.reprojection_error_px < 1.0, "{}", sol.reprojection_error_px);
            prop_assert!(close(&sol.c_new, &sol.c, 1e-10));
        }
    }
}
