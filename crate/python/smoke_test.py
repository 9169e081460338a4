"""Smoke test for the pv_inspect extension module.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml`, then run
`python python/smoke_test.py`.
"""

import json
import math

import pv_inspect


def main() -> None:
    d = pv_inspect.haversine(0.0, 0.0, 1.0, 0.0)
    assert abs(d - 6_371_008.8 * math.radians(1.0)) < 1e-6, d
    try:
        pv_inspect.haversine(91.0, 0.0, 0.0, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("latitude out of range accepted")

    sample = json.loads(pv_inspect.sample_report_json())
    assert sample["site_id"] == "PV-PLANT-08"

    a = pv_inspect.simulate(seed=0)
    b = pv_inspect.simulate(seed=0)
    assert a == b
    report = json.loads(a["report_json"])
    metrics = json.loads(a["metrics"])
    assert a["report_kml"].startswith("<?xml")
    assert a["metrics_csv"].startswith("parameter,value,seed")
    print(f"simulate: {len(report['detections'])} events, recall {metrics['recall']:.3f}")

    offline = json.loads(pv_inspect.dedup(a["detections_jsonl"], epsilon=1.0, min_pts=2))
    assert offline["detections"] == report["detections"]

    r = pv_inspect.reacquire(250.0, 60.0, 400.0, 400.0, 160.0, 128.0)
    assert r["reprojection_error_px"] < 1e-9
    print(f"reacquire: angle {r['angle']:.6f} rad, axis {r['axis']}")

    for term, err in pv_inspect.fuse_check(seed=0, instances=20):
        assert err < 1e-4, (term, err)
        print(f"fuse_check: {term} {err:.2e}")

    print(f"pv_inspect {pv_inspect.__version__}: ok")


if __name__ == "__main__":
    main()
