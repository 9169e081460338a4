//! Python bindings. Structured inputs and outputs cross the boundary as
//! JSON text in the same formats the CLI reads and writes.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pvi::config::PipelineConfig;
use pvi::dedup::{deduplicate, DbscanParams};
use pvi::fusion::{run_gradient_suite, SuiteConfig};
use pvi::geodesy::{haversine_distance, EarthModel, GeoPoint};
use pvi::geoprojection::{Attitude, ProjectedDetection, UavPose};
use pvi::reacquisition::{centering_command, CameraIntrinsics, CenteringSolution, GimbalAngles};
use pvi::simulator::{self, SimError};
use pvi::telemetry::{to_json, MissionReport};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Config(_) => value_err(e),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

pub fn distance_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> Result<f64, String> {
    let a = GeoPoint::lat_lon(lat1, lon1).map_err(|e| e.to_string())?;
    let b = GeoPoint::lat_lon(lat2, lon2).map_err(|e| e.to_string())?;
    Ok(haversine_distance(&a, &b, &EarthModel::default()))
}

pub fn parse_config(config_json: Option<&str>, seed: Option<u64>) -> Result<PipelineConfig, String> {
    let mut cfg = match config_json {
        Some(text) => PipelineConfig::from_json(text).map_err(|e| e.to_string())?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// Events as a report payload, stamped with the earliest detection time.
pub fn dedup_jsonl(lines: &str, epsilon: f64, min_pts: usize) -> Result<Vec<u8>, String> {
    let params = DbscanParams::new(epsilon, min_pts).map_err(|e| e.to_string())?;
    let dets = lines
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<ProjectedDetection>(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect::<Result<Vec<_>, _>>()?;
    let events = deduplicate(&dets, &params).map_err(|e| e.to_string())?;
    let ts = dets.iter().map(|d| d.timestamp).min().unwrap_or_default();
    let report = MissionReport::from_events("OFFLINE", "UNKNOWN", ts, &events).map_err(|e| e.to_string())?;
    Ok(to_json(&report))
}

pub fn centering(u: f64, v: f64, intrinsics: [f64; 4], gimbal_pitch_deg: f64, gimbal_yaw_deg: f64) -> Result<CenteringSolution, String> {
    let [fx, fy, cx, cy] = intrinsics;
    let k = CameraIntrinsics::new(fx, fy, cx, cy).map_err(|e| e.to_string())?;
    let pose = UavPose {
        position: GeoPoint::lat_lon(0.0, 0.0).map_err(|e| e.to_string())?,
        attitude: Attitude::default(),
        gimbal: GimbalAngles {
            pitch: gimbal_pitch_deg.to_radians(),
            yaw: gimbal_yaw_deg.to_radians(),
            roll: 0.0,
        },
    };
    centering_command(u, v, &pose.pointing(&k)).map_err(|e| e.to_string())
}

/// Great-circle distance in meters.
#[pyfunction]
fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> PyResult<f64> {
    distance_m(lat1, lon1, lat2, lon2).map_err(value_err)
}

/// Runs a synthetic mission. Returns a dict with `report_json`, `report_kml`,
/// `metrics_csv`, `summary` and the scored `metrics` as JSON text.
#[pyfunction]
#[pyo3(signature = (config_json=None, seed=None))]
fn simulate(py: Python<'_>, config_json: Option<&str>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let cfg = parse_config(config_json, seed).map_err(value_err)?;
    let out = simulator::simulate(&cfg).map_err(sim_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("report_json", String::from_utf8_lossy(&out.report_json))?;
    d.set_item("report_kml", String::from_utf8_lossy(&out.report_kml))?;
    d.set_item("metrics_csv", String::from_utf8_lossy(&out.metrics_csv))?;
    d.set_item("summary", &out.summary)?;
    d.set_item("metrics", serde_json::to_string(&out.metrics).map_err(value_err)?)?;
    d.set_item(
        "detections_jsonl",
        out.trace
            .projected
            .iter()
            .map(|p| serde_json::to_string(p).map(|s| s + "\n"))
            .collect::<Result<String, _>>()
            .map_err(value_err)?,
    )?;
    Ok(d.into_any().unbind())
}

/// Clusters line-delimited detections; returns the report payload.
#[pyfunction]
#[pyo3(signature = (detections_jsonl, epsilon=1.0, min_pts=2))]
fn dedup(detections_jsonl: &str, epsilon: f64, min_pts: usize) -> PyResult<String> {
    let bytes = dedup_jsonl(detections_jsonl, epsilon, min_pts).map_err(value_err)?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

/// Gimbal command that centers pixel `(u, v)`; level body, nadir by default.
#[pyfunction]
#[pyo3(signature = (u, v, fx, fy, cx, cy, gimbal_pitch_deg=-90.0, gimbal_yaw_deg=0.0))]
#[allow(clippy::too_many_arguments)]
fn reacquire(
    py: Python<'_>,
    u: f64,
    v: f64,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    gimbal_pitch_deg: f64,
    gimbal_yaw_deg: f64,
) -> PyResult<Py<PyAny>> {
    let s = centering(u, v, [fx, fy, cx, cy], gimbal_pitch_deg, gimbal_yaw_deg).map_err(value_err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("axis", [s.rotation.axis.x, s.rotation.axis.y, s.rotation.axis.z])?;
    d.set_item("angle", s.rotation.angle)?;
    d.set_item("delta_pitch", s.command.delta_pitch)?;
    d.set_item("delta_yaw", s.command.delta_yaw)?;
    d.set_item("reprojection_error_px", s.reprojection_error_px)?;
    Ok(d.into_any().unbind())
}

/// Maximum relative gradient error per loss term.
#[pyfunction]
#[pyo3(signature = (seed=0, dim=8, instances=100))]
fn fuse_check(seed: u64, dim: usize, instances: usize) -> PyResult<Vec<(String, f64)>> {
    let cfg = SuiteConfig {
        seed,
        dim,
        instances,
        fault: None,
    };
    let reports = run_gradient_suite(&cfg).map_err(value_err)?;
    Ok(reports.into_iter().map(|r| (r.term.name().to_string(), r.max_rel_error)).collect())
}

/// The documented example payload.
#[pyfunction]
fn sample_report_json() -> String {
    String::from_utf8_lossy(&to_json(&MissionReport::sample())).into_owned()
}

#[pymodule]
fn pv_inspect(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(haversine, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(dedup, m)?)?;
    m.add_function(wrap_pyfunction!(reacquire, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_check, m)?)?;
    m.add_function(wrap_pyfunction!(sample_report_json, m)?)?;
    Ok(())
}
