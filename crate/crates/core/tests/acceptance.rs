//! Acceptance suite: one check per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p pv-inspect --test acceptance -- --nocapture` to see
//! the per-criterion report.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pv_inspect::config::PipelineConfig;
use pv_inspect::dedup::{dbscan_by, ClusterLabel, DbscanParams};
use pv_inspect::fusion::{
    run_gradient_suite, synthetic_crops, train_toy, LossWeights, ModelShape, SuiteConfig, TrainConfig,
};
use pv_inspect::geodesy::{enu_to_geo, geo_to_enu, haversine_distance, EarthModel, EnuOffset, GeoPoint};
use pv_inspect::reacquisition::{
    centering_command, rodrigues_rotate, solve_axis_angle, AxisAngle, Vec3,
};
use pv_inspect::simulator::{
    evaluate, generate_plant, plan_flight, render_frame, run_mission, simulate, sweep, DefectSpec, MetricsReport,
    SweepParam,
};
use pv_inspect::telemetry::{to_json, to_kml, MissionReport};
use pv_inspect::thermal::Palette;

const GOLDEN: &str = include_str!("golden/sample_report.json");

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("runtime {:.1} s exceeds {limit_s} s", elapsed.as_secs_f64())
    })
}

fn mission(seed: u64, edit: impl FnOnce(&mut PipelineConfig)) -> MetricsReport {
    let mut c = PipelineConfig {
        seed,
        ..Default::default()
    };
    edit(&mut c);
    let (trace, _, _) = run_mission(&c).expect("mission runs");
    evaluate(&trace, &trace.ground_truth, c.simulator.match_radius_m)
}

fn c1_dedup_effect() -> Outcome {
    let t = Instant::now();
    let m = mission(0, |_| {});
    ensure(m.dup_fp_raw.rate >= 0.5, || format!("raw dup-fp {:.3} < 0.5", m.dup_fp_raw.rate))?;
    ensure(m.dup_fp_dedup.rate <= 0.05, || format!("dedup dup-fp {:.3} > 0.05", m.dup_fp_dedup.rate))?;
    let mut worst_gap = f64::INFINITY;
    for seed in 0..20 {
        let s = mission(seed, |_| {});
        ensure(s.dup_fp_dedup.rate <= s.dup_fp_raw.rate, || {
            format!("seed {seed}: dedup {:.3} > raw {:.3}", s.dup_fp_dedup.rate, s.dup_fp_raw.rate)
        })?;
        worst_gap = worst_gap.min(s.dup_fp_raw.rate - s.dup_fp_dedup.rate);
    }
    within(t.elapsed(), 10.0)?;
    Ok(format!(
        "raw {:.3} -> dedup {:.3}; min reduction over 20 seeds {:.3}; {:.1} s",
        m.dup_fp_raw.rate,
        m.dup_fp_dedup.rate,
        worst_gap,
        t.elapsed().as_secs_f64()
    ))
}

fn c2_epsilon_sensitivity() -> Outcome {
    let t = Instant::now();
    let eps = [0.1, 0.5, 1.0, 2.0, 5.0];
    let rows = sweep(SweepParam::Epsilon, &eps, &PipelineConfig::default()).map_err(|e| e.to_string())?;
    let gt = rows[0].1.ground_truth;
    let counts: Vec<usize> = rows.iter().map(|(_, m)| m.events).collect();
    ensure(counts[0] > gt, || format!("eps 0.1 gives {} events, expected > {gt}", counts[0]))?;
    ensure(counts[1] == gt && counts[2] == gt, || {
        format!("eps 0.5/1.0 give {}/{} events, expected {gt}", counts[1], counts[2])
    })?;
    ensure(counts[4] < gt, || format!("eps 5.0 gives {} events, expected < {gt}", counts[4]))?;
    within(t.elapsed(), 60.0)?;
    Ok(format!("events {counts:?} for {gt} defects at eps {eps:?}"))
}

fn c3_bandwidth() -> Outcome {
    let m = mission(0, |_| {});
    ensure(m.bandwidth_savings >= 0.60, || format!("savings {:.4} < 0.60", m.bandwidth_savings))?;
    Ok(format!(
        "{:.3} MB/min raw vs {:.6} MB/min telemetry, savings {:.4}",
        m.raw_mb_per_min, m.telemetry_mb_per_min, m.bandwidth_savings
    ))
}

fn c4_reacquisition_benefit() -> Outcome {
    let t = Instant::now();
    let (mut on, mut off, mut total) = (0, 0, 0);
    for seed in 0..20 {
        let a = mission(seed, |_| {});
        let b = mission(seed, |c| c.reacquisition.enabled = false);
        ensure(a.small_sightings == b.small_sightings, || format!("seed {seed}: unpaired sightings"))?;
        on += a.small_sightings_confirmed;
        off += b.small_sightings_confirmed;
        total += a.small_sightings;
    }
    let (r_on, r_off) = (on as f64 / total as f64, off as f64 / total as f64);
    ensure(r_on > r_off, || format!("re-acq on {r_on:.4} not above off {r_off:.4}"))?;
    within(t.elapsed(), 60.0)?;
    Ok(format!(
        "confirmed small-target recall {r_off:.4} -> {r_on:.4} ({off} -> {on} of {total} sightings, 20 seeds)"
    ))
}

fn mean_recall(seeds: std::ops::Range<u64>, edit: impl Fn(&mut PipelineConfig)) -> f64 {
    let n = seeds.end - seeds.start;
    seeds.map(|s| mission(s, &edit).recall).sum::<f64>() / n as f64
}

fn c5_flight_envelope() -> Outcome {
    let alt: Vec<f64> = [5.0, 10.0, 15.0]
        .iter()
        .map(|&a| mean_recall(0..10, |c| c.simulator.flight.altitude = a))
        .collect();
    let speed: Vec<f64> = [2.0, 5.0, 10.0]
        .iter()
        .map(|&v| mean_recall(0..10, |c| c.simulator.flight.speed = v))
        .collect();
    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    ensure(non_increasing(&alt), || format!("altitude recall {alt:?} increases"))?;
    ensure(non_increasing(&speed), || format!("speed recall {speed:?} increases"))?;
    Ok(format!("mean recall by altitude 5/10/15 m {alt:.3?}; by speed 2/5/10 m/s {speed:.3?}"))
}

fn c6_gradient_suite() -> Outcome {
    let t = Instant::now();
    let reports = run_gradient_suite(&SuiteConfig::default()).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for r in &reports {
        ensure(r.instances >= 100, || format!("{}: only {} instances", r.term, r.instances))?;
        ensure(r.passed(), || format!("{}: max relative error {:.2e}", r.term, r.max_rel_error))?;
        parts.push(format!("{} {:.1e}", r.term, r.max_rel_error));
    }
    within(t.elapsed(), 30.0)?;
    Ok(parts.join(", "))
}

fn c7_palette_invariance() -> Outcome {
    let t = Instant::now();
    let shape = ModelShape::default();
    let luts: Vec<_> = Palette::ALL.iter().map(|p| p.lut()).collect();
    let train = synthetic_crops(48, 1, &shape, &luts);
    let held = synthetic_crops(32, 2, &shape, &luts);
    let ratio = |lambda_pal: f64, seed: u64| -> Result<f64, String> {
        let cfg = TrainConfig {
            seed,
            weights: LossWeights {
                lambda_pal,
                ..Default::default()
            },
            shape,
            ..Default::default()
        };
        let rep = train_toy(&train, &cfg).map_err(|e| e.to_string())?;
        let d0 = rep.initial.mean_palette_distance(&held).map_err(|e| e.to_string())?;
        let d1 = rep.model.mean_palette_distance(&held).map_err(|e| e.to_string())?;
        Ok(d1 / d0)
    };
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for seed in 0..3 {
        let w = ratio(0.1, seed)?;
        let c = ratio(0.0, seed)?;
        ensure(w <= 0.1, || format!("seed {seed}: lambda_pal 0.1 shrinks distance only to {w:.3} of initial"))?;
        ensure(c > 0.1, || format!("seed {seed}: lambda_pal 0 control also shrinks to {c:.3}"))?;
        with.push(w);
        without.push(c);
    }
    within(t.elapsed(), 120.0)?;
    Ok(format!(
        "held-out palette distance ratio {with:.3?} (lambda 0.1) vs {without:.3?} (lambda 0), model seeds 0-2; {:.1} s",
        t.elapsed().as_secs_f64()
    ))
}

fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn recenter_in_simulation() -> Result<f64, String> {
    let mut cfg = PipelineConfig::default();
    cfg.simulator.noise = pv_inspect::simulator::SyntheticDetectorNoise::noiseless();
    cfg.simulator.render.netd_c = 0.0;
    let sim = &cfg.simulator;
    let spec = DefectSpec {
        count: Some(1),
        ..Default::default()
    };
    let gt = generate_plant(5, &sim.plant, &spec).map_err(|e| e.to_string())?;
    let path = plan_flight(&sim.plant, &sim.flight, &sim.camera).map_err(|e| e.to_string())?;
    let k = sim.camera.intrinsics;
    let cal = &cfg.thermal.calibration;
    let mut worst: f64 = 0.0;
    let mut rounds = 0;
    for w in &path.waypoints {
        let (_, vis, _) = render_frame(sim, cal, &gt, &w.pose, 0, w.index as u64, false).map_err(|e| e.to_string())?;
        let Some(d) = vis.iter().find(|d| d.in_frame) else { continue };
        if (d.u - k.cx).hypot(d.v - k.cy) < 20.0 {
            continue;
        }
        let sol = centering_command(d.u, d.v, &w.pose.pointing(&k)).map_err(|e| e.to_string())?;
        let mut pose = w.pose;
        pose.gimbal = pose.gimbal.apply(&sol.command);
        let (_, after, _) = render_frame(sim, cal, &gt, &pose, 0, 9_999, false).map_err(|e| e.to_string())?;
        let e = after.iter().find(|v| v.in_frame).map_or(f64::INFINITY, |v| (v.u - k.cx).hypot(v.v - k.cy));
        worst = worst.max(e);
        rounds += 1;
    }
    ensure(rounds > 0, || "no off-center sighting to re-acquire".into())?;
    ensure(worst < 1.0, || format!("re-acquired target {worst:.3} px from center"))?;
    Ok(worst)
}

fn c8_rodrigues() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut oracle, mut norm, mut solve): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let axis = random_unit(&mut rng);
        let angle = rng.random_range(-PI..PI);
        let c = random_unit(&mut rng) * rng.random_range(0.1..10.0);
        let got = rodrigues_rotate(&c, &AxisAngle::new(axis, angle).map_err(|e| e.to_string())?);
        let want = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle) * c;
        oracle = oracle.max((got - want).norm() / c.norm());
        norm = norm.max((got.norm() - c.norm()).abs() / c.norm());
        let from = random_unit(&mut rng);
        let to = random_unit(&mut rng);
        solve = solve.max((rodrigues_rotate(&from, &solve_axis_angle(&from, &to)) - to).norm());
    }
    ensure(oracle < 1e-12, || format!("matrix oracle error {oracle:.2e}"))?;
    ensure(norm < 1e-12, || format!("norm drift {norm:.2e}"))?;
    ensure(solve < 1e-10, || format!("solve-then-rotate error {solve:.2e}"))?;
    let px = recenter_in_simulation()?;
    Ok(format!(
        "oracle {oracle:.1e}, norm {norm:.1e}, solve {solve:.1e}, re-centered within {px:.2e} px"
    ))
}

fn c9_geodesy() -> Outcome {
    let earth = EarthModel::default();
    let r = earth.radius;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut meridian: f64 = 0.0;
    for (lat0, dlat) in [(0.0, 1.0), (-45.0, 30.0), (10.0, 0.001), (-89.0, 178.0)] {
        let a = GeoPoint::lat_lon(lat0, 12.5).unwrap();
        let b = GeoPoint::lat_lon(lat0 + dlat, 12.5).unwrap();
        meridian = meridian.max(rel(haversine_distance(&a, &b, &earth), r * f64::to_radians(dlat)));
    }
    let mut antipodal: f64 = 0.0;
    for (lat, lon) in [(0.0, 0.0), (49.4, 26.98), (-33.9, 151.2), (10.0, -170.0)] {
        let a = GeoPoint::lat_lon(lat, lon).unwrap();
        let b = GeoPoint::lat_lon(-lat, if lon > 0.0 { lon - 180.0 } else { lon + 180.0 }).unwrap();
        antipodal = antipodal.max(rel(haversine_distance(&a, &b, &earth), PI * r));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut round_trip, mut agree): (f64, f64) = (0.0, 0.0);
    for _ in 0..2000 {
        let origin = GeoPoint::lat_lon(rng.random_range(-70.0..70.0), rng.random_range(-180.0..180.0)).unwrap();
        let bearing = rng.random_range(0.0..2.0 * PI);
        let dist = rng.random_range(1.0..1000.0);
        let off = EnuOffset::new(dist * bearing.sin(), dist * bearing.cos(), 0.0);
        let p = enu_to_geo(&origin, &off, &earth).map_err(|e| e.to_string())?;
        let back = geo_to_enu(&origin, &p, &earth).map_err(|e| e.to_string())?;
        let q = enu_to_geo(&origin, &back, &earth).map_err(|e| e.to_string())?;
        round_trip = round_trip.max((q.lat - p.lat).abs().max((q.lon - p.lon).abs()));
        agree = agree.max(rel(back.horizontal_norm(), haversine_distance(&origin, &p, &earth)));
    }
    ensure(meridian < 1e-9, || format!("meridian arc error {meridian:.2e}"))?;
    ensure(antipodal < 1e-9, || format!("antipodal error {antipodal:.2e}"))?;
    ensure(round_trip < 1e-9, || format!("ENU round trip {round_trip:.2e} deg"))?;
    ensure(agree < 1e-6, || format!("haversine vs ENU {agree:.2e}"))?;
    Ok(format!(
        "meridian {meridian:.1e}, antipodal {antipodal:.1e}, round trip {round_trip:.1e} deg, haversine/ENU {agree:.1e}"
    ))
}

fn dist(p: &[(f64, f64)], i: usize, j: usize) -> f64 {
    (p[i].0 - p[j].0).hypot(p[i].1 - p[j].1)
}

/// Core points, their reachability components and which of those each
/// border point may join.
fn reachability(p: &[(f64, f64)], eps: f64, min_pts: usize) -> (Vec<Option<usize>>, Vec<BTreeSet<usize>>) {
    let n = p.len();
    let near = |i: usize, j: usize| i == j || dist(p, i, j) <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();
    let mut comp: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    for s in 0..n {
        if !core[s] || comp[s].is_some() {
            continue;
        }
        let mut stack = vec![s];
        comp[s] = Some(next);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && comp[j].is_none() && near(i, j) {
                    comp[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    let options = (0..n)
        .map(|i| {
            if core[i] {
                BTreeSet::new()
            } else {
                (0..n).filter(|&j| core[j] && near(i, j)).filter_map(|j| comp[j]).collect()
            }
        })
        .collect();
    (comp, options)
}

fn groups(labels: &[ClusterLabel], ids: &[usize]) -> BTreeSet<BTreeSet<usize>> {
    let mut clusters: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut out = BTreeSet::new();
    for (k, l) in labels.iter().enumerate() {
        match l {
            ClusterLabel::Cluster(c) => {
                clusters.entry(*c).or_default().insert(ids[k]);
            }
            ClusterLabel::Noise => {
                out.insert(BTreeSet::from([ids[k]]));
            }
        }
    }
    out.extend(clusters.into_values());
    out
}

fn c10_dbscan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let eps_grid = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.5];
    let mut cases = 0;
    for n in 0..=8usize {
        for _ in 0..150 {
            let pts: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.random_range(0..5) as f64, rng.random_range(0..5) as f64))
                .collect();
            for &eps in &eps_grid {
                for min_pts in 1..=4 {
                    cases += 1;
                    let params = DbscanParams::new(eps, min_pts).unwrap();
                    let labels = dbscan_by(n, |i, j| dist(&pts, i, j), &params);
                    let (comp, options) = reachability(&pts, eps, min_pts);
                    // map oracle components onto returned ids
                    let mut map: BTreeMap<usize, ClusterLabel> = BTreeMap::new();
                    for i in 0..n {
                        if let Some(c) = comp[i] {
                            ensure(!matches!(labels[i], ClusterLabel::Noise), || format!("core point {i} labeled noise in {pts:?}"))?;
                            let prev = *map.entry(c).or_insert(labels[i]);
                            ensure(prev == labels[i], || format!("component {c} split in {pts:?}"))?;
                        }
                    }
                    let distinct: BTreeSet<_> = map.values().collect();
                    ensure(distinct.len() == map.len(), || format!("components merged in {pts:?} eps {eps}"))?;
                    for i in 0..n {
                        if comp[i].is_some() {
                            continue;
                        }
                        let ok = match labels[i] {
                            ClusterLabel::Noise => options[i].is_empty(),
                            l => options[i].iter().any(|c| map[c] == l),
                        };
                        ensure(ok, || format!("border point {i} misassigned in {pts:?} eps {eps} min_pts {min_pts}"))?;
                    }

                    let mut perm: Vec<usize> = (0..n).collect();
                    for k in (1..n).rev() {
                        perm.swap(k, rng.random_range(0..=k));
                    }
                    let shuffled: Vec<(f64, f64)> = perm.iter().map(|&i| pts[i]).collect();
                    let relabeled = dbscan_by(n, |i, j| dist(&shuffled, i, j), &params);
                    let unambiguous = options.iter().all(|o| o.len() <= 1);
                    let ids: Vec<usize> = (0..n).collect();
                    if unambiguous {
                        ensure(groups(&labels, &ids) == groups(&relabeled, &perm), || {
                            format!("partition changed under permutation {perm:?} of {pts:?}")
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!("{cases} labelings match the reachability oracle and are permutation invariant"))
}

fn rings_closed(kml: &[u8]) -> Result<usize, String> {
    let text = std::str::from_utf8(kml).map_err(|e| e.to_string())?;
    let doc = roxmltree::Document::parse(text).map_err(|e| format!("KML is not well-formed: {e}"))?;
    let mut rings = 0;
    for ring in doc.descendants().filter(|n| n.has_tag_name("LinearRing")) {
        let coords = ring
            .descendants()
            .find(|n| n.has_tag_name("coordinates"))
            .and_then(|n| n.text())
            .ok_or("ring without coordinates")?;
        let pts: Vec<&str> = coords.split_whitespace().collect();
        ensure(pts.len() >= 4 && pts.first() == pts.last(), || format!("open ring: {coords}"))?;
        rings += 1;
    }
    Ok(rings)
}

fn c11_payload() -> Outcome {
    let sample = MissionReport::sample();
    let json = to_json(&sample);
    ensure(json == GOLDEN.as_bytes(), || {
        format!("to_json differs from golden:\n{}\n{}", String::from_utf8_lossy(&json), GOLDEN)
    })?;
    let value: serde_json::Value = serde_json::from_slice(&json).map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&json);
    let at: Vec<Option<usize>> = ["\"site_id\"", "\"uav\"", "\"ts_utc\"", "\"detections\""].iter().map(|k| text.find(k)).collect();
    ensure(at.iter().all(Option::is_some) && at.windows(2).all(|w| w[0] < w[1]), || "top-level key order".into())?;
    ensure(value.as_object().is_some_and(|o| o.len() == 4), || "unexpected top-level keys".into())?;
    let det = &value["detections"][0];
    for key in ["id", "class", "conf", "temp_C", "centroid_wgs84", "polygon_wgs84", "media"] {
        ensure(det.get(key).is_some(), || format!("detection lacks `{key}`"))?;
    }
    ensure(det["media"]["rgb"].is_string() && det["media"]["tiff"].is_string(), || "media shape".into())?;
    ensure(det["polygon_wgs84"].as_array().is_some_and(|p| p.iter().all(|v| v.as_array().is_some_and(|a| a.len() == 2))), || {
        "polygon_wgs84 is not a list of [lat, lon] pairs".into()
    })?;
    let mut rings = rings_closed(&to_kml(&sample))?;
    let (_, report, _) = run_mission(&PipelineConfig::default()).map_err(|e| e.to_string())?;
    rings += rings_closed(&to_kml(&report))?;
    Ok(format!("{} golden bytes match; {rings} KML rings closed", json.len()))
}

fn c12_determinism() -> Outcome {
    let cfg = PipelineConfig {
        seed: 12,
        ..Default::default()
    };
    let a = simulate(&cfg).map_err(|e| e.to_string())?;
    let b = simulate(&cfg).map_err(|e| e.to_string())?;
    let mut names = Vec::new();
    for ((name, x), (_, y)) in a.files().into_iter().zip(b.files()) {
        ensure(x == y, || format!("{name} differs between runs"))?;
        names.push(name);
    }
    Ok(format!("{} byte-identical across runs", names.join(", ")))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("1 de-duplication effect", c1_dedup_effect),
        ("2 epsilon sensitivity", c2_epsilon_sensitivity),
        ("3 bandwidth reduction", c3_bandwidth),
        ("4 re-acquisition benefit", c4_reacquisition_benefit),
        ("5 flight-envelope trend", c5_flight_envelope),
        ("6 gradient suite", c6_gradient_suite),
        ("7 palette invariance", c7_palette_invariance),
        ("8 rodrigues suite", c8_rodrigues),
        ("9 geodesy suite", c9_geodesy),
        ("10 dbscan suite", c10_dbscan),
        ("11 payload conformance", c11_payload),
        ("12 determinism", c12_determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
