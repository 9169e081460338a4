//! Synthetic radiometric frames and sensor packets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{stream, FlightPath, GroundTruthDefect, SimError, SimulatorConfig, Stream};
use crate::geodesy::{enu_to_geo, geo_to_enu, EarthModel, EnuOffset, GeoPoint};
use crate::geoprojection::{camera_to_world_rotation, Attitude, UavPose};
use crate::reacquisition::Vec3;
use crate::thermal::{Calibration, RadiometricFrame, Raster, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub ambient_c: f64,
    /// Per-pixel temperature noise (sensor NETD), standard deviation in degC.
    pub netd_c: f64,
    /// Optical blur added in quadrature to each defect's pixel sigma.
    pub psf_px: f64,
    /// Fractional loss of excess temperature at the image corners.
    pub vignetting: f64,
    pub exposure_s: f64,
    /// Ground smear during one exposure at which the miss probability reaches `1 - 1/e`.
    pub blur_scale_m: f64,
    pub clutter_excess_c: [f64; 2],
    pub clutter_sigma_px: [f64; 2],
    /// Hover time spent on one re-acquisition round.
    pub reacq_dwell_s: f64,
    pub panel_rgb: [u8; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            ambient_c: 30.0,
            netd_c: 0.05,
            psf_px: 0.8,
            vignetting: 0.5,
            exposure_s: 0.01,
            blur_scale_m: 0.25,
            clutter_excess_c: [6.0, 12.0],
            clutter_sigma_px: [1.0, 2.5],
            reacq_dwell_s: 1.0,
            panel_rgb: [28, 42, 88],
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.ambient_c.is_finite()
            && self.ambient_c > -273.15
            && self.netd_c >= 0.0
            && self.psf_px >= 0.0
            && (0.0..1.0).contains(&self.vignetting)
            && self.exposure_s >= 0.0
            && self.blur_scale_m > 0.0
            && self.clutter_excess_c[0] <= self.clutter_excess_c[1]
            && self.clutter_sigma_px[0] > 0.0
            && self.clutter_sigma_px[0] <= self.clutter_sigma_px[1]
            && self.reacq_dwell_s >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::Config("render parameters out of range".into()))
        }
    }

    /// Probability that motion blur suppresses a detection. The smear is
    /// compared with defect size on the ground, so it does not depend on altitude.
    pub fn blur_miss_probability(&self, speed: f64) -> f64 {
        1.0 - (-speed * self.exposure_s / self.blur_scale_m).exp()
    }
}

/// A ground-truth defect whose rendered footprint reaches into the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibleDefect {
    pub index: usize,
    pub u: f64,
    pub v: f64,
    pub sigma_px: f64,
    /// Whether the defect center itself lies inside the image.
    pub in_frame: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorPacket {
    pub frame_id: u64,
    pub t_s: f64,
    pub pose_true: UavPose,
    /// Pose as reported by navigation, including configured noise.
    pub pose: UavPose,
    pub thermal: RadiometricFrame,
    pub rgb: RgbImage,
    pub visible: Vec<VisibleDefect>,
    pub clutter: usize,
}

struct Spot {
    u: f64,
    v: f64,
    sigma_px: f64,
    excess: f64,
}

fn ground_origin(cfg: &SimulatorConfig) -> GeoPoint {
    GeoPoint {
        alt: cfg.plant.elevation,
        ..cfg.plant.origin
    }
}

/// Renders the thermal frame seen from `pose_true`. `frame_id` keys the
/// noise and clutter sub-streams.
pub fn render_frame(
    cfg: &SimulatorConfig,
    calibration: &Calibration,
    defects: &[GroundTruthDefect],
    pose_true: &UavPose,
    seed: u64,
    frame_id: u64,
    with_clutter: bool,
) -> Result<(RadiometricFrame, Vec<VisibleDefect>, usize), SimError> {
    let cam = &cfg.camera;
    let k = &cam.intrinsics;
    let (w, h) = (cam.width, cam.height);
    let earth = EarthModel::default();
    let c = geo_to_enu(&ground_origin(cfg), &pose_true.position, &earth)
        .map_err(|e| SimError::Config(format!("pose outside plant frame: {e}")))?;
    let world_to_cam = camera_to_world_rotation(pose_true).transpose();

    let mut spots = Vec::new();
    let mut visible = Vec::new();
    for (index, d) in defects.iter().enumerate() {
        let ned = Vec3::new(d.enu.north - c.north, d.enu.east - c.east, c.up - d.enu.up);
        let p = world_to_cam.apply(&ned);
        if p.z <= 0.0 {
            continue;
        }
        let Ok((u, v)) = k.project(&p) else { continue };
        let sigma_px = d.sigma_m * k.fx / p.z;
        let reach = 4.0 * (sigma_px * sigma_px + cfg.render.psf_px * cfg.render.psf_px).sqrt();
        if u + reach >= 0.0 && u - reach <= w as f64 && v + reach >= 0.0 && v - reach <= h as f64 {
            let in_frame = (0.0..w as f64).contains(&u) && (0.0..h as f64).contains(&v);
            visible.push(VisibleDefect {
                index,
                u,
                v,
                sigma_px,
                in_frame,
            });
        }
        spots.push(Spot {
            u,
            v,
            sigma_px,
            excess: d.excess_c,
        });
    }

    let mut clutter = 0;
    if with_clutter && cfg.noise.clutter_rate > 0.0 {
        let mut rng = stream(seed, Stream::Clutter, frame_id);
        let rate = cfg.noise.clutter_rate;
        clutter = rate.floor() as usize + usize::from(rng.random_bool(rate.fract()));
        let r = &cfg.render;
        for _ in 0..clutter {
            let pick = |rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64| if lo < hi { rng.random_range(lo..hi) } else { lo };
            let u = pick(&mut rng, 5.0, w as f64 - 5.0);
            let v = pick(&mut rng, 5.0, h as f64 - 5.0);
            let excess = pick(&mut rng, r.clutter_excess_c[0], r.clutter_excess_c[1]);
            let sigma_px = pick(&mut rng, r.clutter_sigma_px[0], r.clutter_sigma_px[1]);
            spots.push(Spot { u, v, sigma_px, excess });
        }
    }

    let r = &cfg.render;
    let mut temp = vec![r.ambient_c; w * h];
    let r_max2 = k.cx.max(w as f64 - k.cx).powi(2) + k.cy.max(h as f64 - k.cy).powi(2);
    for s in &spots {
        let var = s.sigma_px * s.sigma_px + r.psf_px * r.psf_px;
        let amp = s.excess * s.sigma_px * s.sigma_px / var;
        let reach = 4.0 * var.sqrt();
        let x0 = (s.u - reach).floor().max(0.0) as usize;
        let y0 = (s.v - reach).floor().max(0.0) as usize;
        let x1 = ((s.u + reach).ceil().max(0.0) as usize).min(w);
        let y1 = ((s.v + reach).ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            let py = y as f64 + 0.5;
            for x in x0..x1 {
                let px = x as f64 + 0.5;
                let d2 = (px - s.u).powi(2) + (py - s.v).powi(2);
                let gain = 1.0 - r.vignetting * ((px - k.cx).powi(2) + (py - k.cy).powi(2)) / r_max2;
                temp[y * w + x] += amp * gain * (-d2 / (2.0 * var)).exp();
            }
        }
    }
    if r.netd_c > 0.0 {
        let mut rng = stream(seed, Stream::Render, frame_id);
        let noise = Normal::new(0.0, r.netd_c).expect("finite netd");
        for t in &mut temp {
            *t += noise.sample(&mut rng);
        }
    }
    let raw = temp.iter().map(|&t| calibration.to_raw(t)).collect();
    Ok((RadiometricFrame::new(w, h, raw, *calibration)?, visible, clutter))
}

/// Applies navigation noise to a true pose.
pub(crate) fn measured_pose(cfg: &SimulatorConfig, pose: &UavPose, seed: u64, frame_id: u64) -> UavPose {
    let n = &cfg.noise;
    if n.position_sigma_m == 0.0 && n.attitude_sigma_rad == 0.0 {
        return *pose;
    }
    let mut rng = stream(seed, Stream::Pose, frame_id);
    let pos = Normal::new(0.0, n.position_sigma_m).expect("finite sigma");
    let att = Normal::new(0.0, n.attitude_sigma_rad).expect("finite sigma");
    let off = EnuOffset::new(pos.sample(&mut rng), pos.sample(&mut rng), pos.sample(&mut rng));
    let position = enu_to_geo(&pose.position, &off, &EarthModel::default()).expect("small offset");
    UavPose {
        position,
        attitude: Attitude {
            roll: pose.attitude.roll + att.sample(&mut rng),
            pitch: pose.attitude.pitch + att.sample(&mut rng),
            yaw: pose.attitude.yaw + att.sample(&mut rng),
        },
        gimbal: pose.gimbal,
    }
}

/// One packet per waypoint, rendered lazily.
pub fn simulate_frames<'a>(
    cfg: &'a SimulatorConfig,
    calibration: &'a Calibration,
    defects: &'a [GroundTruthDefect],
    path: &'a FlightPath,
    seed: u64,
) -> impl Iterator<Item = Result<SensorPacket, SimError>> + 'a {
    path.waypoints.iter().map(move |wp| {
        let frame_id = wp.index as u64;
        let (thermal, visible, clutter) = render_frame(cfg, calibration, defects, &wp.pose, seed, frame_id, true)?;
        Ok(SensorPacket {
            frame_id,
            t_s: wp.t_s,
            pose_true: wp.pose,
            pose: measured_pose(cfg, &wp.pose, seed, frame_id),
            thermal,
            rgb: Raster::filled(cfg.camera.width, cfg.camera.height, cfg.render.panel_rgb),
            visible,
            clutter,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate_plant, plan_flight, DefectSpec, PlantLayout};
    use crate::thermal::radiometric_to_celsius;

    fn one_defect(cfg: &SimulatorConfig, east: f64, north: f64) -> GroundTruthDefect {
        let enu = EnuOffset::new(east, north, 0.0);
        GroundTruthDefect {
            id: "gt_000".into(),
            module: 0,
            class_id: "hotspot_single".into(),
            offset: [0.0, 0.0],
            excess_c: 20.0,
            sigma_m: 0.1,
            enu,
            location: cfg.plant.to_geo(&enu),
        }
    }

    fn pose_above(cfg: &SimulatorConfig, east: f64, north: f64, yaw: f64) -> UavPose {
        let mut p = cfg.plant.to_geo(&EnuOffset::new(east, north, 0.0));
        p.alt = 10.0;
        UavPose::nadir(p, yaw)
    }

    fn argmax(t: &[f64], w: usize) -> (usize, usize) {
        let i = (0..t.len()).max_by(|&a, &b| t[a].total_cmp(&t[b])).unwrap();
        (i % w, i / w)
    }

    #[test]
    fn empty_plant_is_uniform_ambient() {
        let cfg = SimulatorConfig {
            render: RenderConfig {
                netd_c: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let (frame, vis, _) = render_frame(&cfg, &Calibration::default(), &[], &pose_above(&cfg, 5.0, 5.0, 0.0), 1, 0, true).unwrap();
        assert!(vis.is_empty());
        let map = radiometric_to_celsius(&frame).unwrap();
        assert!(map.temp_c.iter().all(|&t| (t - 30.0).abs() < 0.006));
    }

    #[test]
    fn nadir_peak_at_principal_point() {
        let cfg = SimulatorConfig::default();
        let d = one_defect(&cfg, 4.3, 6.1);
        for yaw in [0.0, 1.0, std::f64::consts::PI] {
            let (frame, vis, _) = render_frame(&cfg, &Calibration::default(), &[d.clone()], &pose_above(&cfg, 4.3, 6.1, yaw), 1, 0, false).unwrap();
            assert_eq!(vis.len(), 1);
            assert!((vis[0].u - 160.0).abs() < 1e-6 && (vis[0].v - 128.0).abs() < 1e-6);
            assert!((vis[0].sigma_px - 4.0).abs() < 1e-9);
            let map = radiometric_to_celsius(&frame).unwrap();
            let (x, y) = argmax(&map.temp_c, 320);
            assert!((x as f64 + 0.5 - 160.0).abs() <= 1.0 && (y as f64 + 0.5 - 128.0).abs() <= 1.0);
            // PSF-attenuated amplitude 20 * 16 / 16.64 at the center
            assert!((map.at(x, y) - 30.0 - 20.0 * 16.0 / 16.64).abs() < 0.4);
        }
    }

    #[test]
    fn image_up_is_north() {
        let cfg = SimulatorConfig::default();
        let d = one_defect(&cfg, 5.0, 6.0);
        let (_, vis, _) = render_frame(&cfg, &Calibration::default(), &[d], &pose_above(&cfg, 5.0, 5.0, 0.0), 1, 0, false).unwrap();
        // 1 m north at 10 m altitude is 40 px above the center
        assert!((vis[0].v - 88.0).abs() < 1e-6 && (vis[0].u - 160.0).abs() < 1e-6);
    }

    #[test]
    fn defect_outside_footprints_never_appears() {
        let cfg = SimulatorConfig::default();
        let path = plan_flight(&cfg.plant, &cfg.flight, &cfg.camera).unwrap();
        let far = one_defect(&cfg, 60.0, 60.0);
        for p in simulate_frames(&cfg, &Calibration::default(), std::slice::from_ref(&far), &path, 3) {
            assert!(p.unwrap().visible.is_empty());
        }
    }

    #[test]
    fn frames_are_deterministic() {
        let cfg = SimulatorConfig::default();
        let gt = generate_plant(5, &PlantLayout::default(), &DefectSpec::default()).unwrap();
        let path = plan_flight(&cfg.plant, &cfg.flight, &cfg.camera).unwrap();
        let a: Vec<_> = simulate_frames(&cfg, &Calibration::default(), &gt, &path, 5).take(4).map(Result::unwrap).collect();
        let b: Vec<_> = simulate_frames(&cfg, &Calibration::default(), &gt, &path, 5).take(4).map(Result::unwrap).collect();
        assert_eq!(a, b);
        assert_ne!(a[0].pose, a[0].pose_true);
    }

    #[test]
    fn blur_miss_grows_with_speed() {
        let r = RenderConfig::default();
        let p: Vec<f64> = [2.0, 5.0, 10.0].iter().map(|&s| r.blur_miss_probability(s)).collect();
        assert!(p[0] < p[1] && p[1] < p[2] && p[2] < 1.0);
        assert!((p[1] - (1.0 - (-0.2f64).exp())).abs() < 1e-12);
        assert_eq!(RenderConfig { exposure_s: 0.0, ..r }.blur_miss_probability(10.0), 0.0);
    }
}
