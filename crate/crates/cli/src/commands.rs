use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};

use pv_inspect::config::PipelineConfig;
use pv_inspect::dedup::{deduplicate, DbscanParams};
use pv_inspect::fusion::{loss_identities, run_gradient_suite, GradTerm, SuiteConfig, SUITE_TOLERANCE};
use pv_inspect::geodesy::{haversine_distance, EarthModel, GeoPoint};
use pv_inspect::geoprojection::{pixel_to_ground, Attitude, GroundPlane, ProjectedDetection, UavPose};
use pv_inspect::reacquisition::{centering_command, CameraIntrinsics, GimbalAngles, Vec3};
use pv_inspect::simulator::{self, sweep_csv, MetricsRow, SimError, SweepParam};
use pv_inspect::telemetry::{self, to_json, to_kml, write_atomic, MissionReport};

use crate::{DedupArgs, ExportKmlArgs, FuseCheckArgs, ReacquireArgs, SimulateArgs, SweepArgs};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
    Verification(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) | Failure::Verification(m) => f.write_str(m),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// `println!` that tolerates a closed stdout, e.g. when piped into `head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(PipelineConfig::default()),
    }
}

fn write(path: &Path, bytes: &[u8]) -> CmdResult {
    write_atomic(path, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn jsonl(items: &[ProjectedDetection]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("records serialize");
        out.push(b'\n');
    }
    out
}

pub fn simulate(a: &SimulateArgs) -> CmdResult {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let out = simulator::simulate(&cfg)?;
    out.write_to(&a.out)
        .map_err(|e| Failure::Runtime(format!("cannot write outputs to {}: {e}", a.out.display())))?;
    if let Some(p) = &a.detections {
        write(p, &jsonl(&out.trace.projected))?;
    }
    log::info!("wrote {} outputs to {}", out.files().len(), a.out.display());
    let _ = write!(std::io::stdout(), "{}", out.summary);
    Ok(())
}

/// Parses line-delimited detections, collecting every bad line.
fn parse_detections(text: &str) -> Result<Vec<ProjectedDetection>, Vec<String>> {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ProjectedDetection>(line) {
            Ok(d) => ok.push(d),
            Err(e) => bad.push(format!("line {}: {e}", i + 1)),
        }
    }
    if bad.is_empty() {
        Ok(ok)
    } else {
        Err(bad)
    }
}

pub fn dedup(a: &DedupArgs) -> CmdResult {
    let params = DbscanParams::new(a.epsilon, a.min_pts)
        .map_err(|e| Failure::Usage(format!("{e}\nusage: pv-pipeline dedup --input F --epsilon M --min-pts K --out F")))?;
    let text = fs::read_to_string(&a.input).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.input.display())))?;
    let dets = parse_detections(&text).map_err(|bad| {
        Failure::Usage(format!("{} malformed record(s) in {}:\n{}", bad.len(), a.input.display(), bad.join("\n")))
    })?;
    let events = deduplicate(&dets, &params).map_err(|e| Failure::Runtime(e.to_string()))?;
    let ts = dets.iter().map(|d| d.timestamp).min().unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    let report = MissionReport::from_events(&a.site_id, &a.uav, ts, &events).map_err(|e| Failure::Runtime(e.to_string()))?;
    write(&a.out, &to_json(&report))?;
    out!("detections: {} -> events: {}", dets.len(), events.len());
    Ok(())
}

pub fn sweep(a: &SweepArgs) -> CmdResult {
    let param: SweepParam = a.param.parse().map_err(Failure::Usage)?;
    let base = load_config(a.config.as_deref())?;
    let seeds = if a.seeds.is_empty() { vec![base.seed] } else { a.seeds.clone() };
    let mut rows = Vec::new();
    for seed in seeds {
        let cfg = PipelineConfig { seed, ..base.clone() };
        for (value, m) in simulator::sweep(param, &a.values, &cfg)? {
            out!(
                "{param}={value} seed={seed}: recall {:.3}, events {}/{}, dup-fp {:.3} -> {:.3}",
                m.recall, m.events, m.ground_truth, m.dup_fp_raw.rate, m.dup_fp_dedup.rate
            );
            rows.push(MetricsRow::new(param.name(), value, &m));
        }
    }
    write(&a.out, &sweep_csv(&rows))
}

pub fn fuse_check(a: &FuseCheckArgs) -> CmdResult {
    let fault = a
        .inject_fault
        .as_deref()
        .map(str::parse::<GradTerm>)
        .transpose()
        .map_err(Failure::Usage)?;
    let cfg = SuiteConfig {
        seed: a.seed,
        dim: a.dim,
        instances: a.instances,
        fault,
    };
    let reports = run_gradient_suite(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut failing = Vec::new();
    for r in &reports {
        let mark = if r.passed() { "ok" } else { "FAIL" };
        out!("{:<20} max rel error {:.3e} over {} instances  {mark}", r.term.name(), r.max_rel_error, r.instances);
        if !r.passed() {
            failing.push(r.term.name().to_string());
        }
    }
    for (name, ok) in loss_identities() {
        out!("{name:<20} {}", if ok { "ok" } else { "FAIL" });
        if !ok {
            failing.push(name.to_string());
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "gradient check failed (tolerance {SUITE_TOLERANCE:e}): {}",
            failing.join(", ")
        )))
    }
}

fn fmt_vec(v: &Vec3) -> String {
    format!("[{:+.6}, {:+.6}, {:+.6}]", v.x, v.y, v.z)
}

pub fn reacquire_demo(a: &ReacquireArgs) -> CmdResult {
    let [u, v] = a.pixel[..] else {
        return Err(Failure::Usage(format!("--pixel expects U,V, got {} value(s)", a.pixel.len())));
    };
    let k = CameraIntrinsics::new(a.fx, a.fy, a.cx, a.cy).map_err(|e| Failure::Usage(e.to_string()))?;
    if !(a.alt.is_finite() && a.alt > 0.0) {
        return Err(Failure::Usage(format!("--alt must be positive, got {}", a.alt)));
    }
    let pose = UavPose {
        position: GeoPoint::new(49.4072, 26.9841, a.alt).map_err(|e| Failure::Usage(e.to_string()))?,
        attitude: Attitude {
            yaw: a.heading.to_radians(),
            ..Default::default()
        },
        gimbal: GimbalAngles {
            pitch: a.gimbal_pitch.to_radians(),
            yaw: a.gimbal_yaw.to_radians(),
            roll: 0.0,
        },
    };
    let sol = centering_command(u, v, &pose.pointing(&k)).map_err(|e| Failure::Runtime(e.to_string()))?;
    out!("pixel                 ({u}, {v})");
    out!("v (camera ray)        {}", fmt_vec(&sol.v));
    out!("c (world ray, NED)    {}", fmt_vec(&sol.c));
    out!("boresight (NED)       {}", fmt_vec(&sol.boresight));
    out!("axis                  {}", fmt_vec(&sol.rotation.axis));
    out!("angle                 {:.6} rad ({:.4} deg)", sol.rotation.angle, sol.rotation.angle.to_degrees());
    out!("c_new                 {}", fmt_vec(&sol.c_new));
    out!(
        "gimbal deltas         pitch {:+.4} deg, yaw {:+.4} deg",
        sol.command.delta_pitch.to_degrees(),
        sol.command.delta_yaw.to_degrees()
    );
    out!("reprojection error    {:.3e} px", sol.reprojection_error_px);

    let plane = GroundPlane::default();
    let target = pixel_to_ground(u, v, &k, &pose, &plane)
        .map_err(|e| Failure::Runtime(format!("projection: no ground intersection for pixel ({u}, {v}): {e}")))?;
    let after = UavPose {
        gimbal: pose.gimbal.apply(&sol.command),
        ..pose
    };
    let center = pixel_to_ground(k.cx, k.cy, &k, &after, &plane)
        .map_err(|e| Failure::Runtime(format!("projection: no ground intersection after re-pointing: {e}")))?;
    let miss = haversine_distance(&target, &center, &EarthModel::default());
    out!("target on ground      {:.7}, {:.7}", target.lat, target.lon);
    out!("new image center      {:.7}, {:.7} ({miss:.3e} m from target)", center.lat, center.lon);
    Ok(())
}

pub fn export_kml(a: &ExportKmlArgs) -> CmdResult {
    let bytes = fs::read(&a.report).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", a.report.display())))?;
    let report = telemetry::from_json(&bytes).map_err(|e| Failure::Usage(format!("{}: {e}", a.report.display())))?;
    write(&a.out, &to_kml(&report))?;
    out!("{} placemark(s) written to {}", report.detections.len(), a.out.display());
    Ok(())
}
