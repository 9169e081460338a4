//! Mission scoring and parameter sweeps.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::{run_mission, GroundTruthDefect, MissionTrace, Outcome, SimError};
use crate::config::PipelineConfig;
use crate::dedup::{dup_fp_report, match_to_ground_truth, DupFpReport, GroundTruthPoint};
use crate::telemetry::bandwidth_savings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub frames: usize,
    pub reacq_frames: usize,
    pub detections: usize,
    pub missed: usize,
    pub accepted: usize,
    /// Accepted only after re-acquisition.
    pub confirmed_after_reacq: usize,
    pub rejected: usize,
    pub projected: usize,
    pub projection_drops: usize,
    pub ground_truth: usize,
    pub events: usize,
    pub matched_gt: usize,
    /// Ground-truth defects matched by at least one event.
    pub recall: f64,
    pub small_targets: usize,
    pub small_matched: usize,
    pub small_target_recall: f64,
    /// Survey frames in which a small target's center is in view.
    pub small_sightings: usize,
    /// Of those, sightings whose detection was confirmed.
    pub small_sightings_confirmed: usize,
    pub small_sighting_recall: f64,
    /// Scored on the projected detections, before clustering.
    pub dup_fp_raw: DupFpReport,
    /// Scored on the de-duplicated events.
    pub dup_fp_dedup: DupFpReport,
    pub raw_mb_per_min: f64,
    pub telemetry_mb_per_min: f64,
    pub bandwidth_savings: f64,
    pub duration_s: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate(trace: &MissionTrace, ground_truth: &[GroundTruthDefect], match_radius: f64) -> MetricsReport {
    let points: Vec<GroundTruthPoint> = ground_truth.iter().map(GroundTruthDefect::as_point).collect();
    let mut hit = vec![false; points.len()];
    for k in match_to_ground_truth(&trace.events, &points, match_radius).into_iter().flatten() {
        hit[k] = true;
    }
    let small: Vec<usize> = (0..ground_truth.len())
        .filter(|&i| ground_truth[i].sigma_m <= trace.small_target_sigma_m)
        .collect();
    let small_matched = small.iter().filter(|&&i| hit[i]).count();
    let matched_gt = hit.iter().filter(|&&h| h).count();

    let small_ids: std::collections::HashSet<&str> = small.iter().map(|&i| ground_truth[i].id.as_str()).collect();
    let mut sightings = 0;
    let mut sightings_confirmed = 0;
    for f in &trace.frames {
        for id in f.visible.iter().filter(|id| small_ids.contains(id.as_str())) {
            sightings += 1;
            let confirmed = f.detections.iter().any(|d| {
                d.truth.as_deref() == Some(id.as_str()) && matches!(d.outcome, Outcome::Accepted | Outcome::Confirmed)
            });
            sightings_confirmed += usize::from(confirmed);
        }
    }

    let outcomes = trace.frames.iter().flat_map(|f| &f.detections);
    let count = |o: Outcome| trace.frames.iter().flat_map(|f| &f.detections).filter(|d| d.outcome == o).count();
    let (raw_rate, tel_rate) = trace.ledger.rates_mb_per_min().unwrap_or((0.0, 0.0));
    MetricsReport {
        seed: trace.seed,
        frames: trace.frames.len(),
        reacq_frames: trace.reacq_frames.len(),
        detections: outcomes.count(),
        missed: count(Outcome::Missed),
        accepted: count(Outcome::Accepted) + count(Outcome::Confirmed),
        confirmed_after_reacq: count(Outcome::Confirmed),
        rejected: count(Outcome::Rejected),
        projected: trace.projected.len(),
        projection_drops: trace.projection_drops,
        ground_truth: ground_truth.len(),
        events: trace.events.len(),
        matched_gt,
        recall: ratio(matched_gt, points.len()),
        small_targets: small.len(),
        small_matched,
        small_target_recall: ratio(small_matched, small.len()),
        small_sightings: sightings,
        small_sightings_confirmed: sightings_confirmed,
        small_sighting_recall: ratio(sightings_confirmed, sightings),
        dup_fp_raw: dup_fp_report(&trace.projected, &points, match_radius),
        dup_fp_dedup: dup_fp_report(&trace.events, &points, match_radius),
        raw_mb_per_min: raw_rate,
        telemetry_mb_per_min: tel_rate,
        bandwidth_savings: bandwidth_savings(&trace.ledger).unwrap_or(0.0),
        duration_s: trace.ledger.mission_duration_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Altitude,
    Speed,
    Epsilon,
    AlongOverlap,
}

impl SweepParam {
    pub fn apply(self, base: &PipelineConfig, value: f64) -> PipelineConfig {
        let mut c = base.clone();
        match self {
            SweepParam::Altitude => c.simulator.flight.altitude = value,
            SweepParam::Speed => c.simulator.flight.speed = value,
            SweepParam::Epsilon => c.dedup.epsilon = value,
            SweepParam::AlongOverlap => c.simulator.flight.along_overlap = value,
        }
        c
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Altitude => "altitude",
            SweepParam::Speed => "speed",
            SweepParam::Epsilon => "epsilon",
            SweepParam::AlongOverlap => "along_overlap",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "altitude" => Ok(SweepParam::Altitude),
            "speed" => Ok(SweepParam::Speed),
            "epsilon" => Ok(SweepParam::Epsilon),
            "along_overlap" => Ok(SweepParam::AlongOverlap),
            other => Err(format!("unknown sweep parameter `{other}` (altitude, speed, epsilon, along_overlap)")),
        }
    }
}

/// One mission per value with the base seed. Missions publish to a null sink.
pub fn sweep(param: SweepParam, values: &[f64], base: &PipelineConfig) -> Result<Vec<(f64, MetricsReport)>, SimError> {
    if values.is_empty() {
        return Err(SimError::Config("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| {
            let mut cfg = param.apply(base, v);
            cfg.telemetry.sink = crate::config::SinkConfig::Null;
            let (trace, _, _) = run_mission(&cfg)?;
            Ok((v, evaluate(&trace, &trace.ground_truth, cfg.simulator.match_radius_m)))
        })
        .collect()
}

/// Flat CSV row of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub parameter: String,
    pub value: f64,
    pub seed: u64,
    pub frames: usize,
    pub reacq_frames: usize,
    pub detections: usize,
    pub missed: usize,
    pub accepted: usize,
    pub confirmed_after_reacq: usize,
    pub rejected: usize,
    pub projected: usize,
    pub ground_truth: usize,
    pub events: usize,
    pub recall: f64,
    pub small_targets: usize,
    pub small_target_recall: f64,
    pub small_sighting_recall: f64,
    pub dup_fp_raw: f64,
    pub dup_fp_raw_of_fp: f64,
    pub dup_fp_dedup: f64,
    pub dup_fp_dedup_of_fp: f64,
    pub raw_mb_per_min: f64,
    pub telemetry_mb_per_min: f64,
    pub bandwidth_savings: f64,
}

impl MetricsRow {
    pub fn new(parameter: &str, value: f64, m: &MetricsReport) -> Self {
        Self {
            parameter: parameter.to_string(),
            value,
            seed: m.seed,
            frames: m.frames,
            reacq_frames: m.reacq_frames,
            detections: m.detections,
            missed: m.missed,
            accepted: m.accepted,
            confirmed_after_reacq: m.confirmed_after_reacq,
            rejected: m.rejected,
            projected: m.projected,
            ground_truth: m.ground_truth,
            events: m.events,
            recall: m.recall,
            small_targets: m.small_targets,
            small_target_recall: m.small_target_recall,
            small_sighting_recall: m.small_sighting_recall,
            dup_fp_raw: m.dup_fp_raw.rate,
            dup_fp_raw_of_fp: m.dup_fp_raw.rate_of_false_positives,
            dup_fp_dedup: m.dup_fp_dedup.rate,
            dup_fp_dedup_of_fp: m.dup_fp_dedup.rate_of_false_positives,
            raw_mb_per_min: m.raw_mb_per_min,
            telemetry_mb_per_min: m.telemetry_mb_per_min,
            bandwidth_savings: m.bandwidth_savings,
        }
    }
}

pub fn sweep_csv(rows: &[MetricsRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}
