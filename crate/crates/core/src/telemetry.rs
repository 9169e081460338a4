//! Relevance-only reporting: compact JSON and KML payloads, publish sinks and
//! bandwidth accounting.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dedup::DefectEvent;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("invalid report: {0}")]
    Report(String),
    #[error("malformed payload: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("raw byte count is zero; savings undefined")]
    NoRawBytes,
    #[error("mission duration must be positive")]
    Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediaRef {
    pub rgb: String,
    pub tiff: String,
}

impl MediaRef {
    pub fn new(rgb: impl Into<String>, tiff: impl Into<String>) -> Self {
        Self {
            rgb: rgb.into(),
            tiff: tiff.into(),
        }
    }
}

/// One consolidated defect in payload shape. Coordinates are `[lat, lon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub id: String,
    pub class: String,
    pub conf: f64,
    #[serde(rename = "temp_C")]
    pub temp_c: f64,
    pub centroid_wgs84: [f64; 2],
    pub polygon_wgs84: Vec<[f64; 2]>,
    pub media: MediaRef,
}

impl From<&DefectEvent> for DetectionRecord {
    fn from(e: &DefectEvent) -> Self {
        Self {
            id: e.id.clone(),
            class: e.class_id.clone(),
            conf: e.confidence,
            temp_c: e.peak_temp_c,
            centroid_wgs84: [e.centroid.lat, e.centroid.lon],
            polygon_wgs84: e.polygon.vertices().iter().map(|p| [p.lat, p.lon]).collect(),
            media: e.media.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionReport {
    pub site_id: String,
    pub uav: String,
    pub ts_utc: DateTime<Utc>,
    pub detections: Vec<DetectionRecord>,
}

impl MissionReport {
    pub fn new(
        site_id: impl Into<String>,
        uav: impl Into<String>,
        ts_utc: DateTime<Utc>,
        detections: Vec<DetectionRecord>,
    ) -> Result<Self, TelemetryError> {
        let r = Self {
            site_id: site_id.into(),
            uav: uav.into(),
            ts_utc,
            detections,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn from_events(
        site_id: impl Into<String>,
        uav: impl Into<String>,
        ts_utc: DateTime<Utc>,
        events: &[DefectEvent],
    ) -> Result<Self, TelemetryError> {
        Self::new(site_id, uav, ts_utc, events.iter().map(DetectionRecord::from).collect())
    }

    pub fn validate(&self) -> Result<(), TelemetryError> {
        let mut seen = HashSet::new();
        for d in &self.detections {
            if !seen.insert(d.id.as_str()) {
                return Err(TelemetryError::Report(format!("duplicate event id {}", d.id)));
            }
            if d.media.rgb.is_empty() || d.media.tiff.is_empty() {
                return Err(TelemetryError::Report(format!("{}: empty media reference", d.id)));
            }
            let finite = [d.conf, d.temp_c, d.centroid_wgs84[0], d.centroid_wgs84[1]]
                .into_iter()
                .chain(d.polygon_wgs84.iter().flatten().copied())
                .all(f64::is_finite);
            if !finite {
                return Err(TelemetryError::Report(format!("{}: non-finite value", d.id)));
            }
        }
        Ok(())
    }

    /// The documented example report.
    pub fn sample() -> Self {
        Self {
            site_id: "PV-PLANT-08".into(),
            uav: "M300 RTK".into(),
            ts_utc: "2025-09-30T10:12:33Z".parse().expect("valid timestamp"),
            detections: vec![DetectionRecord {
                id: "clu_012a".into(),
                class: "hotspot_single".into(),
                conf: 0.91,
                temp_c: 82.4,
                centroid_wgs84: [49.407251, 26.984173],
                polygon_wgs84: vec![
                    [49.407249, 26.984170],
                    [49.407252, 26.984175],
                    [49.407254, 26.984174],
                    [49.407251, 26.984169],
                ],
                media: MediaRef::new("gs://bucket/vid123_03456.jpg", "gs://bucket/vid123_03456.tif"),
            }],
        }
    }
}

fn fixed(v: f64, dp: usize) -> String {
    let s = format!("{v:.dp$}");
    // never emit a negative zero
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

fn lat_lon(out: &mut String, p: &[f64; 2]) {
    let _ = write!(out, "[{},{}]", fixed(p[0], 6), fixed(p[1], 6));
}

/// Compact payload with fixed key order and numeric precision.
pub fn to_json(report: &MissionReport) -> Vec<u8> {
    let mut s = String::with_capacity(128 + 256 * report.detections.len());
    let _ = write!(
        s,
        "{{\"site_id\":{},\"uav\":{},\"ts_utc\":{},\"detections\":[",
        quoted(&report.site_id),
        quoted(&report.uav),
        quoted(&report.ts_utc.to_rfc3339_opts(SecondsFormat::Secs, true)),
    );
    for (i, d) in report.detections.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(
            s,
            "{{\"id\":{},\"class\":{},\"conf\":{},\"temp_C\":{},\"centroid_wgs84\":",
            quoted(&d.id),
            quoted(&d.class),
            fixed(d.conf, 2),
            fixed(d.temp_c, 2),
        );
        lat_lon(&mut s, &d.centroid_wgs84);
        s.push_str(",\"polygon_wgs84\":[");
        for (j, p) in d.polygon_wgs84.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            lat_lon(&mut s, p);
        }
        let _ = write!(
            s,
            "],\"media\":{{\"rgb\":{},\"tiff\":{}}}}}",
            quoted(&d.media.rgb),
            quoted(&d.media.tiff)
        );
    }
    s.push_str("]}");
    s.into_bytes()
}

pub fn from_json(bytes: &[u8]) -> Result<MissionReport, TelemetryError> {
    let r: MissionReport = serde_json::from_slice(bytes)?;
    r.validate()?;
    Ok(r)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// KML 2.2 document with one Placemark per event. Coordinates are `lon,lat,0`.
pub fn to_kml(report: &MissionReport) -> Vec<u8> {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str("<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n<Document>\n");
    let _ = writeln!(
        s,
        "<name>{} {}</name>",
        xml_escape(&report.site_id),
        report.ts_utc.to_rfc3339_opts(SecondsFormat::Secs, true)
    );
    for d in &report.detections {
        let _ = writeln!(s, "<Placemark>\n<name>{}</name>", xml_escape(&d.id));
        let _ = writeln!(
            s,
            "<description>class={}; conf={}; temp_C={}</description>",
            xml_escape(&d.class),
            fixed(d.conf, 2),
            fixed(d.temp_c, 2)
        );
        s.push_str("<Polygon><outerBoundaryIs><LinearRing><coordinates>");
        let ring = d.polygon_wgs84.iter().chain(d.polygon_wgs84.first());
        let tuples: Vec<String> = ring.map(|p| format!("{},{},0", fixed(p[1], 6), fixed(p[0], 6))).collect();
        s.push_str(&tuples.join(" "));
        s.push_str("</coordinates></LinearRing></outerBoundaryIs></Polygon>\n</Placemark>\n");
    }
    s.push_str("</Document>\n</kml>\n");
    s.into_bytes()
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("http: {0}")]
    Http(String),
}

/// Destination for published payloads.
pub trait Sink {
    fn deliver(&mut self, payload: &[u8]) -> Result<(), SinkError>;

    /// Attempts allowed per publish.
    fn attempts(&self) -> u32 {
        1
    }

    /// Delay before retry number `attempt` (1-based).
    fn backoff(&self, _attempt: u32) -> Duration {
        Duration::ZERO
    }
}

/// Writes the payload to a temporary file beside `path` and renames it into place.
#[derive(Debug, Clone)]
pub struct FileSink {
    pub path: PathBuf,
}

impl FileSink {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl Sink for FileSink {
    fn deliver(&mut self, payload: &[u8]) -> Result<(), SinkError> {
        Ok(write_atomic(&self.path, payload)?)
    }
}

/// POSTs `application/json` with exponential backoff between attempts.
#[derive(Debug, Clone)]
pub struct HttpSink {
    pub url: String,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl HttpSink {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(10),
        }
    }
}

impl Sink for HttpSink {
    fn deliver(&mut self, payload: &[u8]) -> Result<(), SinkError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(payload)
            .map(|_| ())
            .map_err(|e| SinkError::Http(e.to_string()))
    }

    fn attempts(&self) -> u32 {
        self.max_attempts
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base * 2u32.pow(attempt.saturating_sub(1))
    }
}

/// Keeps payloads in memory.
#[derive(Debug, Clone, Default)]
pub struct MemorySink {
    pub payloads: Vec<Vec<u8>>,
}

impl Sink for MemorySink {
    fn deliver(&mut self, payload: &[u8]) -> Result<(), SinkError> {
        self.payloads.push(payload.to_vec());
        Ok(())
    }
}

/// Discards payloads; still counted by the ledger.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullSink;

impl Sink for NullSink {
    fn deliver(&mut self, _payload: &[u8]) -> Result<(), SinkError> {
        Ok(())
    }
}

#[derive(Debug, Error)]
#[error("delivery failed after {attempts} attempt(s): {last}")]
pub struct DeliveryError {
    pub attempts: u32,
    pub last: SinkError,
    /// The undelivered payload, for re-queueing.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub bytes: u64,
    pub attempts: u32,
}

/// Serializes `report`, delivers it and records the payload size.
pub fn publish(report: &MissionReport, sink: &mut dyn Sink, ledger: &mut BandwidthLedger) -> Result<Delivery, DeliveryError> {
    let payload = to_json(report);
    let max = sink.attempts().max(1);
    let mut attempt = 1;
    loop {
        match sink.deliver(&payload) {
            Ok(()) => {
                ledger.record_payload(payload.len() as u64);
                return Ok(Delivery {
                    bytes: payload.len() as u64,
                    attempts: attempt,
                });
            }
            Err(e) if attempt >= max => {
                return Err(DeliveryError {
                    attempts: attempt,
                    last: e,
                    payload,
                })
            }
            Err(e) => {
                log::warn!("publish attempt {attempt} failed: {e}");
                std::thread::sleep(sink.backoff(attempt));
                attempt += 1;
            }
        }
    }
}

/// Bytes per pixel of an uncompressed frame pair: 16-bit thermal plus 8-bit RGB.
pub const RAW_BYTES_PER_PIXEL: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BandwidthLedger {
    pub raw_bytes: u64,
    pub telemetry_bytes: u64,
    pub mission_duration_s: f64,
}

impl BandwidthLedger {
    pub fn record_frame(&mut self, width: usize, height: usize) {
        self.raw_bytes += (width * height) as u64 * RAW_BYTES_PER_PIXEL;
    }

    pub fn record_payload(&mut self, bytes: u64) {
        self.telemetry_bytes += bytes;
    }

    pub fn extend_duration(&mut self, seconds: f64) {
        if seconds > 0.0 {
            self.mission_duration_s += seconds;
        }
    }

    /// `(raw, telemetry)` in MB per minute.
    pub fn rates_mb_per_min(&self) -> Result<(f64, f64), TelemetryError> {
        if !(self.mission_duration_s > 0.0) {
            return Err(TelemetryError::Duration);
        }
        let per_min = 60.0 / self.mission_duration_s / 1e6;
        Ok((self.raw_bytes as f64 * per_min, self.telemetry_bytes as f64 * per_min))
    }
}

/// `1 - telemetry/raw`, clamped to `[0, 1]`.
pub fn bandwidth_savings(ledger: &BandwidthLedger) -> Result<f64, TelemetryError> {
    if ledger.raw_bytes == 0 {
        return Err(TelemetryError::NoRawBytes);
    }
    Ok((1.0 - ledger.telemetry_bytes as f64 / ledger.raw_bytes as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_payload_shape() {
        let json = String::from_utf8(to_json(&MissionReport::sample())).unwrap();
        assert!(json.starts_with(r#"{"site_id":"PV-PLANT-08","uav":"M300 RTK","ts_utc":"2025-09-30T10:12:33Z","detections":[{"id":"clu_012a","class":"hotspot_single","conf":0.91,"temp_C":82.40,"centroid_wgs84":[49.407251,26.984173],"polygon_wgs84":[[49.407249,26.984170],"#));
        assert!(json.ends_with(r#""media":{"rgb":"gs://bucket/vid123_03456.jpg","tiff":"gs://bucket/vid123_03456.tif"}}]}"#));
        assert!(!json.contains(' ') || json.contains("M300 RTK"));
    }

    #[test]
    fn empty_inventory() {
        let mut r = MissionReport::sample();
        r.detections.clear();
        let json = String::from_utf8(to_json(&r)).unwrap();
        assert!(json.ends_with(r#""detections":[]}"#));
        let kml = String::from_utf8(to_kml(&r)).unwrap();
        assert!(!kml.contains("<Placemark>"));
    }

    #[test]
    fn json_round_trip_through_generic_parser() {
        let r = MissionReport::sample();
        let bytes = to_json(&r);
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let d = &v["detections"][0];
        assert_eq!(d["temp_C"].as_f64(), Some(82.4));
        assert_eq!(d["centroid_wgs84"][1].as_f64(), Some(26.984173));
        assert_eq!(from_json(&bytes).unwrap(), r);
    }

    #[test]
    fn strings_are_escaped() {
        let mut r = MissionReport::sample();
        r.site_id = "a\"b\\c\n".into();
        let back = from_json(&to_json(&r)).unwrap();
        assert_eq!(back.site_id, r.site_id);
    }

    #[test]
    fn fixed_formatting() {
        assert_eq!(fixed(-0.0001, 2), "0.00");
        assert_eq!(fixed(-1.005, 2), "-1.00");
        assert_eq!(fixed(0.125, 2), "0.12");
        assert_eq!(fixed(26.9841725, 6), "26.984172");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut r = MissionReport::sample();
        r.detections.push(r.detections[0].clone());
        assert!(r.validate().is_err());
    }

    #[test]
    fn ledger_savings() {
        let mut l = BandwidthLedger::default();
        assert!(matches!(bandwidth_savings(&l), Err(TelemetryError::NoRawBytes)));
        l.record_frame(10, 10);
        assert_eq!(l.raw_bytes, 500);
        assert_eq!(bandwidth_savings(&l).unwrap(), 1.0);
        l.record_payload(500);
        assert_eq!(bandwidth_savings(&l).unwrap(), 0.0);
        assert!(l.rates_mb_per_min().is_err());
        l.extend_duration(30.0);
        assert_eq!(l.rates_mb_per_min().unwrap(), (0.001, 0.001));
    }

    #[test]
    fn file_sink_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let mut ledger = BandwidthLedger::default();
        let r = MissionReport::sample();
        let d = publish(&r, &mut FileSink::new(&path), &mut ledger).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), to_json(&r));
        assert_eq!(ledger.telemetry_bytes, d.bytes);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    struct Flaky {
        fail: u32,
        calls: u32,
    }

    impl Sink for Flaky {
        fn deliver(&mut self, _: &[u8]) -> Result<(), SinkError> {
            self.calls += 1;
            if self.calls <= self.fail {
                Err(SinkError::Http("down".into()))
            } else {
                Ok(())
            }
        }
        fn attempts(&self) -> u32 {
            3
        }
    }

    #[test]
    fn retry_contract() {
        let mut ledger = BandwidthLedger::default();
        let r = MissionReport::sample();
        let mut s = Flaky { fail: 2, calls: 0 };
        assert_eq!(publish(&r, &mut s, &mut ledger).unwrap().attempts, 3);
        let mut s = Flaky { fail: 5, calls: 0 };
        let err = publish(&r, &mut s, &mut ledger).unwrap_err();
        assert_eq!((err.attempts, s.calls), (3, 3));
        assert_eq!(err.payload, to_json(&r));
        assert_eq!(ledger.telemetry_bytes, to_json(&r).len() as u64);
    }

    #[test]
    fn http_backoff_doubles() {
        let s = HttpSink::new("http://127.0.0.1:1/");
        assert_eq!(s.backoff(1), Duration::from_millis(500));
        assert_eq!(s.backoff(2), Duration::from_millis(1000));
    }
}
