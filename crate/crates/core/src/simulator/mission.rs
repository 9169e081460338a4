//! End-to-end synthetic mission.

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use serde::Serialize;

use super::{
    derived_seed, generate_plant, plan_flight, render_frame, simulate_frames, stream, FlightPath, GroundTruthDefect,
    SensorPacket, SimError, Stream, VisibleDefect,
};
use crate::config::PipelineConfig;
use crate::dedup::{deduplicate, DefectEvent};
use crate::fusion::{Detection, Detector, DetectorConfig, DetectorInput, FusionModel, ThresholdDetector};
use crate::geoprojection::{project_detection, FrameContext, GroundPlane, ProjectedDetection, UavPose};
use crate::reacquisition::{reacquisition_decision, Decision, GimbalCommand};
use crate::telemetry::{publish, BandwidthLedger, MediaRef, MissionReport, Sink};
use crate::thermal::{
    apply_palette, clahe_rgb, downsample_rgb, normalize_temperature, radiometric_to_celsius, ClaheParams, PaletteLut,
    RgbImage, TemperatureMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Confidence reached the threshold without re-pointing.
    Accepted,
    /// Accepted after at least one re-acquisition round.
    Confirmed,
    Rejected,
    /// Suppressed by the miss model before the decision.
    Missed,
    /// Confirmed but the footprint could not be projected.
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionOutcome {
    pub index: usize,
    pub class_id: String,
    /// Ground-truth id the detection was rendered from, if any.
    pub truth: Option<String>,
    pub initial_confidence: f64,
    pub final_confidence: f64,
    pub rounds: u32,
    pub outcome: Outcome,
    pub projected_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameTrace {
    pub frame_id: u64,
    pub t_s: f64,
    pub pose: UavPose,
    /// Ground-truth defects whose center is inside the image.
    pub visible: Vec<String>,
    pub clutter: usize,
    /// Mean pairwise distance between the palette embeddings.
    pub palette_spread: f64,
    pub gate_mean: f64,
    pub fused_norm: f64,
    pub detections: Vec<DetectionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReacqFrame {
    pub frame_id: u64,
    pub parent_frame: u64,
    pub detection: usize,
    pub round: u32,
    pub command: GimbalCommand,
    /// Confidence of the re-acquired target, if it was found near the center.
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissionTrace {
    pub seed: u64,
    pub ground_truth: Vec<GroundTruthDefect>,
    pub flight: FlightPath,
    pub frames: Vec<FrameTrace>,
    pub reacq_frames: Vec<ReacqFrame>,
    pub projected: Vec<ProjectedDetection>,
    pub projection_drops: usize,
    pub events: Vec<DefectEvent>,
    pub ledger: BandwidthLedger,
    pub delivery_attempts: u32,
    pub match_radius_m: f64,
    pub small_target_sigma_m: f64,
}

struct FusionStats {
    palette_spread: f64,
    gate_mean: f64,
    fused_norm: f64,
}

fn fuse_frame(
    map: &TemperatureMap,
    rgb: &RgbImage,
    luts: &[PaletteLut],
    clahe: Option<&ClaheParams>,
    model: &FusionModel,
) -> Result<FusionStats, SimError> {
    let side = model.shape.input_side;
    let gray = normalize_temperature(map);
    let palettes = luts
        .iter()
        .map(|lut| {
            let img = apply_palette(&gray, lut)?;
            let img = match clahe {
                Some(p) => clahe_rgb(&img, p)?,
                None => img,
            };
            Ok(downsample_rgb(&img, side))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    let (set, out) = model.fuse(&palettes, &downsample_rgb(rgb, side))?;
    let gate_mean = out.gate.iter().sum::<f64>() / out.gate.len() as f64;
    Ok(FusionStats {
        palette_spread: set.mean_pairwise_distance(),
        gate_mean,
        fused_norm: out.fused.values().iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

/// Assigns each detection the class of the rendered defect nearest its box.
fn label(det: &mut Detection, visible: &[VisibleDefect], gt: &[GroundTruthDefect]) -> Option<String> {
    let b = &det.bbox;
    let best = visible
        .iter()
        .map(|v| {
            let dx = (b.x_min - v.u).max(v.u - b.x_max).max(0.0);
            let dy = (b.y_min - v.v).max(v.v - b.y_max).max(0.0);
            let (cx, cy) = b.center();
            (v, dx.hypot(dy), (cx - v.u).hypot(cy - v.v))
        })
        .filter(|(v, gap, _)| *gap <= (3.0 * v.sigma_px).max(2.0))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)))?;
    let d = &gt[best.0.index];
    det.class_id = d.class_id.clone();
    Some(d.id.clone())
}

struct Mission<'a> {
    cfg: &'a PipelineConfig,
    seed: u64,
    gt: Vec<GroundTruthDefect>,
    detector: ThresholdDetector,
    plane: GroundPlane,
    ledger: BandwidthLedger,
    next_frame: u64,
    reacq_frames: Vec<ReacqFrame>,
}

struct Sighting {
    det: Detection,
    index: usize,
    pose: UavPose,
    frame_id: u64,
    t_s: f64,
}

impl Mission<'_> {
    fn detect(&self, map: &TemperatureMap, rgb: &RgbImage, frame_id: u64, visible: &[VisibleDefect]) -> Vec<(Detection, Option<String>)> {
        self.detector
            .detect(&DetectorInput {
                thermal: map,
                rgb,
                frame_index: frame_id,
            })
            .into_iter()
            .map(|mut d| {
                let truth = label(&mut d, visible, &self.gt);
                (d, truth)
            })
            .collect()
    }

    /// Runs the accept / reject / re-point loop for one detection.
    fn confirm(&mut self, packet: &SensorPacket, index: usize, det: Detection) -> Result<(Outcome, u32, f64, Option<Sighting>), SimError> {
        let sim = &self.cfg.simulator;
        let k = sim.camera.intrinsics;
        let reacq = &self.cfg.reacquisition;
        let policy = &reacq.policy;
        let mut cur = Sighting {
            det,
            index,
            pose: packet.pose,
            frame_id: packet.frame_id,
            t_s: packet.t_s,
        };
        if !reacq.enabled {
            let conf = cur.det.confidence;
            return Ok(if conf >= policy.tau_ra {
                (Outcome::Accepted, 0, conf, Some(cur))
            } else {
                (Outcome::Rejected, 0, conf, None)
            });
        }
        let mut truth = packet.pose_true;
        let mut round = 0;
        loop {
            let conf = cur.det.confidence;
            match reacquisition_decision(&cur.det, sim.camera.area(), policy, round, &cur.pose.pointing(&k))? {
                Decision::Accept => {
                    let o = if round == 0 { Outcome::Accepted } else { Outcome::Confirmed };
                    return Ok((o, round, conf, Some(cur)));
                }
                Decision::Reject => return Ok((Outcome::Rejected, round, conf, None)),
                Decision::Reacquire(cmd) => {
                    let cmd = reacq.limits.clamp(&cur.pose.gimbal, cmd);
                    round += 1;
                    truth.gimbal = truth.gimbal.apply(&cmd);
                    let mut pose = cur.pose;
                    pose.gimbal = pose.gimbal.apply(&cmd);
                    let frame_id = self.next_frame;
                    self.next_frame += 1;
                    let t_s = cur.t_s + sim.render.reacq_dwell_s;
                    self.ledger.record_frame(sim.camera.width, sim.camera.height);
                    self.ledger.extend_duration(sim.render.reacq_dwell_s);

                    let (frame, visible, _) =
                        render_frame(sim, &self.cfg.thermal.calibration, &self.gt, &truth, self.seed, frame_id, false)?;
                    let map = radiometric_to_celsius(&frame)?;
                    let rgb = RgbImage::filled(sim.camera.width, sim.camera.height, sim.render.panel_rgb);
                    let reach = 0.1 * sim.camera.width.min(sim.camera.height) as f64;
                    let found = self
                        .detect(&map, &rgb, frame_id, &visible)
                        .into_iter()
                        .enumerate()
                        .map(|(j, (d, _))| {
                            let (u, v) = d.bbox.center();
                            ((u - k.cx).hypot(v - k.cy), j, d)
                        })
                        .filter(|(r, _, _)| *r <= reach)
                        .min_by(|a, b| a.0.total_cmp(&b.0));
                    self.reacq_frames.push(ReacqFrame {
                        frame_id,
                        parent_frame: packet.frame_id,
                        detection: index,
                        round,
                        command: cmd,
                        confidence: found.as_ref().map(|f| f.2.confidence),
                    });
                    match found {
                        Some((_, j, d)) => {
                            cur = Sighting {
                                det: d,
                                index: j,
                                pose,
                                frame_id,
                                t_s,
                            }
                        }
                        None => return Ok((Outcome::Rejected, round, 0.0, None)),
                    }
                }
            }
        }
    }
}

fn media(prefix: &str, frame_id: u64) -> MediaRef {
    MediaRef::new(
        format!("{prefix}/frame_{frame_id:05}.jpg"),
        format!("{prefix}/frame_{frame_id:05}.tif"),
    )
}

fn timestamp(start: DateTime<Utc>, t_s: f64) -> DateTime<Utc> {
    start + Duration::milliseconds((t_s * 1000.0).round() as i64)
}

/// Runs the configured mission, publishing the report through the configured sink.
pub fn run_mission(config: &PipelineConfig) -> Result<(MissionTrace, MissionReport, BandwidthLedger), SimError> {
    config.validate().map_err(|e| SimError::Config(e.to_string()))?;
    let mut sink = config.telemetry.sink.build();
    run_mission_with_sink(config, sink.as_mut())
}

pub fn run_mission_with_sink(
    config: &PipelineConfig,
    sink: &mut dyn Sink,
) -> Result<(MissionTrace, MissionReport, BandwidthLedger), SimError> {
    config.validate().map_err(|e| SimError::Config(e.to_string()))?;
    let sim = &config.simulator;
    let seed = config.seed;
    let k = sim.camera.intrinsics;
    let gt = generate_plant(seed, &sim.plant, &sim.defects)?;
    let path = plan_flight(&sim.plant, &sim.flight, &sim.camera)?;
    let luts: Vec<PaletteLut> = config.thermal.palettes.iter().map(|p| p.lut()).collect();
    let model = FusionModel::random(sim.fusion, derived_seed(seed, Stream::Model));
    let detector = ThresholdDetector::new(DetectorConfig {
        confidence_sigma: sim.noise.confidence_sigma,
        seed: derived_seed(seed, Stream::Detector),
        ..config.detector.clone()
    });
    let p_blur = sim.render.blur_miss_probability(sim.flight.speed);
    let p_miss = 1.0 - (1.0 - sim.noise.miss_probability) * (1.0 - p_blur);

    let mut m = Mission {
        cfg: config,
        seed,
        gt: gt.clone(),
        detector,
        plane: GroundPlane {
            elevation: sim.plant.elevation,
        },
        ledger: BandwidthLedger::default(),
        next_frame: path.waypoints.len() as u64,
        reacq_frames: Vec::new(),
    };
    m.ledger.extend_duration(path.duration_s);

    let mut frames = Vec::with_capacity(path.waypoints.len());
    let mut projected = Vec::new();
    let mut drops = 0;
    for packet in simulate_frames(sim, &config.thermal.calibration, &gt, &path, seed) {
        let packet = packet?;
        m.ledger.record_frame(sim.camera.width, sim.camera.height);
        let map = radiometric_to_celsius(&packet.thermal)?;
        let fusion = fuse_frame(&map, &packet.rgb, &luts, config.thermal.clahe.as_ref(), &model)?;
        let dets = m.detect(&map, &packet.rgb, packet.frame_id, &packet.visible);
        let mut miss_rng = stream(seed, Stream::Miss, packet.frame_id);
        let mut outcomes = Vec::with_capacity(dets.len());
        for (index, (det, truth)) in dets.into_iter().enumerate() {
            let u: f64 = miss_rng.random();
            let class_id = det.class_id.clone();
            let initial = det.confidence;
            let mut record = DetectionOutcome {
                index,
                class_id,
                truth,
                initial_confidence: initial,
                final_confidence: initial,
                rounds: 0,
                outcome: Outcome::Missed,
                projected_id: None,
            };
            if u < p_miss {
                outcomes.push(record);
                continue;
            }
            let (outcome, rounds, conf, sighting) = m.confirm(&packet, index, det)?;
            record.outcome = outcome;
            record.rounds = rounds;
            record.final_confidence = conf;
            if let Some(s) = sighting {
                let ctx = FrameContext {
                    frame_id: s.frame_id,
                    timestamp: timestamp(sim.start_utc, s.t_s),
                    media: media(&config.telemetry.media_prefix, s.frame_id),
                };
                match project_detection(&s.det, s.index, &k, &s.pose, &m.plane, &ctx) {
                    Ok(p) => {
                        record.projected_id = Some(p.id.clone());
                        projected.push(p);
                    }
                    Err(e) => {
                        log::warn!("frame {} detection {index} dropped: {e}", s.frame_id);
                        record.outcome = Outcome::Dropped;
                        drops += 1;
                    }
                }
            }
            outcomes.push(record);
        }
        frames.push(FrameTrace {
            frame_id: packet.frame_id,
            t_s: packet.t_s,
            pose: packet.pose,
            visible: packet.visible.iter().filter(|v| v.in_frame).map(|v| gt[v.index].id.clone()).collect(),
            clutter: packet.clutter,
            palette_spread: fusion.palette_spread,
            gate_mean: fusion.gate_mean,
            fused_norm: fusion.fused_norm,
            detections: outcomes,
        });
    }

    let events = deduplicate(&projected, &config.dedup)?;
    let report = MissionReport::from_events(&config.telemetry.site_id, &config.telemetry.uav, sim.start_utc, &events)?;
    let mut ledger = m.ledger;
    let delivery = publish(&report, sink, &mut ledger)?;
    log::info!(
        "mission seed {seed}: {} frames, {} re-acquisition frames, {} projected, {} events",
        frames.len(),
        m.reacq_frames.len(),
        projected.len(),
        events.len()
    );
    let trace = MissionTrace {
        seed,
        ground_truth: gt,
        flight: path,
        frames,
        reacq_frames: m.reacq_frames,
        projected,
        projection_drops: drops,
        events,
        ledger,
        delivery_attempts: delivery.attempts,
        match_radius_m: sim.match_radius_m,
        small_target_sigma_m: sim.small_target_sigma_m,
    };
    Ok((trace, report, ledger))
}
