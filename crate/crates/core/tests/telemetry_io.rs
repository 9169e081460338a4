use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use pv_inspect::config::{PipelineConfig, SinkConfig};
use pv_inspect::simulator::run_mission;
use pv_inspect::telemetry::{from_json, publish, to_json, to_kml, BandwidthLedger, FileSink, HttpSink, MissionReport};

struct Request {
    head: String,
    body: Vec<u8>,
}

fn read_request(stream: &mut TcpStream) -> Request {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut head = String::new();
    let mut len = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        if line == "\r\n" || line.is_empty() {
            break;
        }
        head.push_str(&line);
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    Request { head, body }
}

/// Answers every request with `status`, returning the requests it saw.
fn serve(status: &'static str, hits: Arc<AtomicUsize>) -> (String, thread::JoinHandle<Vec<Request>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/ingest", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        listener.set_nonblocking(true).unwrap();
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while std::time::Instant::now() < deadline {
            match listener.accept() {
                Ok((mut s, _)) => {
                    s.set_nonblocking(false).unwrap();
                    let req = read_request(&mut s);
                    hits.fetch_add(1, Ordering::SeqCst);
                    write!(s, "HTTP/1.1 {status}\r\nContent-Length: 0\r\nConnection: close\r\n\r\n").unwrap();
                    seen.push(req);
                }
                Err(_) => thread::sleep(Duration::from_millis(5)),
            }
            if status.starts_with("200") && !seen.is_empty() {
                break;
            }
        }
        seen
    });
    (url, handle)
}

fn fast(url: &str) -> HttpSink {
    HttpSink {
        backoff_base: Duration::from_millis(1),
        timeout: Duration::from_secs(2),
        ..HttpSink::new(url)
    }
}

#[test]
fn http_sink_posts_the_payload_once() {
    let hits = Arc::new(AtomicUsize::new(0));
    let (url, server) = serve("200 OK", hits.clone());
    let report = MissionReport::sample();
    let mut ledger = BandwidthLedger::default();
    let d = publish(&report, &mut fast(&url), &mut ledger).unwrap();
    let seen = server.join().unwrap();
    assert_eq!(d.attempts, 1);
    assert_eq!(seen.len(), 1);
    assert!(seen[0].head.starts_with("POST /ingest HTTP/1.1"));
    assert!(seen[0].head.to_ascii_lowercase().contains("content-type: application/json"));
    assert_eq!(seen[0].body, to_json(&report));
    assert_eq!(ledger.telemetry_bytes, seen[0].body.len() as u64);
}

#[test]
fn server_errors_are_retried_then_reported() {
    let hits = Arc::new(AtomicUsize::new(0));
    let (url, _server) = serve("500 Internal Server Error", hits.clone());
    let mut ledger = BandwidthLedger::default();
    let err = publish(&MissionReport::sample(), &mut fast(&url), &mut ledger).unwrap_err();
    assert_eq!(err.attempts, 3);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(ledger.telemetry_bytes, 0);
    assert_eq!(from_json(&err.payload).unwrap(), MissionReport::sample());
}

#[test]
fn unreachable_endpoint_fails_after_three_attempts() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut ledger = BandwidthLedger::default();
    let err = publish(&MissionReport::sample(), &mut fast(&format!("http://127.0.0.1:{port}/x")), &mut ledger).unwrap_err();
    assert_eq!(err.attempts, 3);
    assert!(err.to_string().contains("3 attempt"));
}

#[test]
fn mission_with_unreachable_sink_is_an_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = PipelineConfig::default();
    cfg.telemetry.sink = SinkConfig::Http {
        url: format!("http://127.0.0.1:{port}/x"),
    };
    cfg.simulator.defects.count = Some(1);
    let started = std::time::Instant::now();
    assert!(run_mission(&cfg).is_err());
    assert!(started.elapsed() < Duration::from_secs(10));
}

#[test]
fn file_sink_replaces_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    std::fs::write(&path, "stale").unwrap();
    let mut ledger = BandwidthLedger::default();
    publish(&MissionReport::sample(), &mut FileSink::new(&path), &mut ledger).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), to_json(&MissionReport::sample()));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn mission_kml_is_well_formed() {
    let (_, report, _) = run_mission(&PipelineConfig::default()).unwrap();
    let kml = String::from_utf8(to_kml(&report)).unwrap();
    let doc = roxmltree::Document::parse(&kml).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "kml");
    let marks: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("Placemark")).collect();
    assert_eq!(marks.len(), report.detections.len());
    for (mark, rec) in marks.iter().zip(&report.detections) {
        let name = mark.descendants().find(|n| n.has_tag_name("name")).and_then(|n| n.text()).unwrap();
        assert_eq!(name, rec.id);
        let ring = mark.descendants().find(|n| n.has_tag_name("coordinates")).and_then(|n| n.text()).unwrap();
        let pts: Vec<Vec<f64>> = ring
            .split_whitespace()
            .map(|p| p.split(',').map(|x| x.parse().unwrap()).collect())
            .collect();
        assert_eq!(pts.first(), pts.last());
        assert_eq!(pts.len(), rec.polygon_wgs84.len() + 1);
        for (p, q) in pts.iter().zip(&rec.polygon_wgs84) {
            assert!((p[0] - q[1]).abs() < 1e-6 && (p[1] - q[0]).abs() < 1e-6, "lon,lat order");
        }
    }
}
