//! Output files of a simulated mission.

use std::fmt::Write as _;
use std::path::Path;

use super::{evaluate, run_mission, sweep_csv, MetricsReport, MetricsRow, MissionTrace, SimError};
use crate::config::PipelineConfig;
use crate::telemetry::{to_json, to_kml, write_atomic, MissionReport};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_KML: &str = "report.kml";
pub const METRICS_CSV: &str = "metrics.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub trace: MissionTrace,
    pub report: MissionReport,
    pub metrics: MetricsReport,
    pub report_json: Vec<u8>,
    pub report_kml: Vec<u8>,
    pub metrics_csv: Vec<u8>,
    pub summary: String,
}

impl Artifacts {
    pub fn files(&self) -> [(&'static str, &[u8]); 4] {
        [
            (REPORT_JSON, &self.report_json),
            (REPORT_KML, &self.report_kml),
            (METRICS_CSV, &self.metrics_csv),
            (SUMMARY_TXT, self.summary.as_bytes()),
        ]
    }

    /// Each file is replaced atomically; nothing is written unless all
    /// outputs were built.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in self.files() {
            write_atomic(&dir.join(name), bytes)?;
        }
        Ok(())
    }
}

pub fn summary_text(m: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed                  {}", m.seed);
    let _ = writeln!(s, "survey frames         {}", m.frames);
    let _ = writeln!(s, "re-acquisition frames {}", m.reacq_frames);
    let _ = writeln!(
        s,
        "detections            {} ({} accepted, {} after re-acquisition, {} rejected, {} missed)",
        m.detections, m.accepted, m.confirmed_after_reacq, m.rejected, m.missed
    );
    let _ = writeln!(s, "projected             {} ({} dropped)", m.projected, m.projection_drops);
    let _ = writeln!(s, "events                {} for {} ground-truth defects", m.events, m.ground_truth);
    let _ = writeln!(s, "recall                {:.3}", m.recall);
    let _ = writeln!(s, "small-target recall   {:.3} (sightings {:.3})", m.small_target_recall, m.small_sighting_recall);
    let _ = writeln!(s, "dup-fp raw            {:.3}", m.dup_fp_raw.rate);
    let _ = writeln!(s, "dup-fp deduplicated   {:.3}", m.dup_fp_dedup.rate);
    let _ = writeln!(
        s,
        "bandwidth             {:.3} MB/min raw, {:.6} MB/min telemetry, savings {:.4}",
        m.raw_mb_per_min, m.telemetry_mb_per_min, m.bandwidth_savings
    );
    s
}

/// Runs the mission and renders every output in memory.
pub fn simulate(config: &PipelineConfig) -> Result<Artifacts, SimError> {
    let (trace, report, _) = run_mission(config)?;
    let metrics = evaluate(&trace, &trace.ground_truth, config.simulator.match_radius_m);
    Ok(Artifacts {
        report_json: to_json(&report),
        report_kml: to_kml(&report),
        metrics_csv: sweep_csv(&[MetricsRow::new("seed", config.seed as f64, &metrics)]),
        summary: summary_text(&metrics),
        trace,
        report,
        metrics,
    })
}
