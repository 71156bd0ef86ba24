#!/usr/bin/env python3
"""Smoke test for the effsize_py extension module.

Builds nothing itself: it locates the cdylib produced by
`cargo build -p effsize-py` (debug or release), stages it under a temp
directory as an importable module, and exercises the main surface.
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def locate_cdylib():
    candidates = [
        os.path.join(REPO_ROOT, "target", profile, "libeffsize_py.so")
        for profile in ("debug", "release")
    ]
    existing = [p for p in candidates if os.path.exists(p)]
    if not existing:
        print("libeffsize_py.so not found; building it with cargo ...")
        subprocess.run(
            ["cargo", "build", "-p", "effsize-py"], cwd=REPO_ROOT, check=True
        )
        existing = [p for p in candidates if os.path.exists(p)]
    # Prefer the most recently built artifact.
    return max(existing, key=os.path.getmtime)


def stage_module(cdylib, stage_dir):
    target = os.path.join(stage_dir, "effsize_py.so")
    shutil.copyfile(cdylib, target)
    sys.path.insert(0, stage_dir)


def approx(a, b, tol=1e-12):
    return abs(a - b) <= tol


def main():
    stage_dir = tempfile.mkdtemp(prefix="effsize_py_")
    stage_module(locate_cdylib(), stage_dir)
    import effsize_py as effsize

    # Formula core.
    assert approx(effsize.local_f2(0.2, 0.3), 0.1 / 0.7)
    assert approx(effsize.global_f2(0.5), 1.0)
    assert approx(effsize.local_f2_external(0.4, 0.3), -0.1 / 0.7)
    assert effsize.classify(0.019) == "below-small"
    assert effsize.classify(0.02) == "small"
    assert effsize.classify(0.35) == "large"
    assert effsize.classify(0.05, (0.01, 0.04, 0.2)) == "medium"
    assert approx(effsize.adjusted_r2(0.5, 11, 2, "ezekiel"), 0.375)
    assert effsize.adjusted_r2(0.5, 20, 3, "olkin_pratt") < 0.5

    # Probability kernel.
    assert effsize.t_cdf(0.0, 7.0) == 0.5
    assert effsize.f_sf(0.0, 2.0, 10.0) == 1.0
    assert approx(effsize.regularized_incomplete_beta(0.5, 3.0, 3.0), 0.5)
    q = effsize.t_quantile(0.975, 30.0)
    assert approx(effsize.t_cdf(q, 30.0), 0.975, 1e-9)

    # Dataset construction and CSV loading.
    data = effsize.Dataset([
        ("y", [1.0, 2.1, 2.9, 4.2, 5.1, 5.9, 7.1, 8.0]),
        ("x", [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]),
    ])
    assert data.n_rows == 8
    assert data.names == ["y", "x"]

    csv_path = os.path.join(stage_dir, "fixture.csv")
    with open(csv_path, "w") as fh:
        fh.write("y,x1,x2\n")
        rng_state = 1234
        rows = []
        for i in range(60):
            rng_state = (rng_state * 6364136223846793005 + 1442695040888963407) % 2**64
            x1 = ((rng_state >> 11) / 2**53) * 4 - 2
            rng_state = (rng_state * 6364136223846793005 + 1442695040888963407) % 2**64
            x2 = ((rng_state >> 11) / 2**53) * 4 - 2
            rng_state = (rng_state * 6364136223846793005 + 1442695040888963407) % 2**64
            noise = ((rng_state >> 11) / 2**53) * 2 - 1
            rows.append(f"{1.0 + 0.8 * x1 + 0.4 * x2 + noise},{x1},{x2}")
        fh.write("\n".join(rows) + "\n")
    loaded, dropped = effsize.Dataset.load_csv(csv_path)
    assert dropped == 0
    assert loaded.n_rows == 60

    # Full analysis report (dict with the CLI JSON keys).
    report = effsize.analyze(loaded, "y", ["x2"], ["x1"])
    body = report["body"]
    for key in ("r2_A", "r2_AB", "f2_local", "label", "F", "p", "intervals"):
        assert key in body, f"missing report key {key}"
    assert body["r2_AB"] >= body["r2_A"]
    assert isinstance(body["p"], str) and "e" in body["p"]
    assert "p <" not in json.dumps(report) and "p >" not in json.dumps(report)

    # Bootstrap determinism under a fixed seed.
    ci_a = effsize.bootstrap_f2_ci(loaded, "y", ["x2"], ["x1"], 250, 0.9, 42)
    ci_b = effsize.bootstrap_f2_ci(loaded, "y", ["x2"], ["x1"], 250, 0.9, 42)
    assert ci_a == ci_b
    assert ci_a["body"]["ci_low"] <= ci_a["body"]["ci_high"]

    # Multilevel report.
    grouped_path = os.path.join(stage_dir, "grouped.csv")
    with open(grouped_path, "w") as fh:
        fh.write("y,x,g\n")
        rng_state = 77
        rows = []
        for group in range(10):
            rng_state = (rng_state * 6364136223846793005 + 1442695040888963407) % 2**64
            u = ((rng_state >> 11) / 2**53) * 2 - 1
            for _ in range(12):
                rng_state = (rng_state * 6364136223846793005 + 1442695040888963407) % 2**64
                x = ((rng_state >> 11) / 2**53) * 4 - 2
                rng_state = (rng_state * 6364136223846793005 + 1442695040888963407) % 2**64
                e = ((rng_state >> 11) / 2**53) * 2 - 1
                rows.append(f"{0.5 + 0.7 * x + u + e},{x},{group}")
        fh.write("\n".join(rows) + "\n")
    gdata, _ = effsize.Dataset.load_csv(grouped_path)
    lmm = effsize.lmm_local_f2(gdata, "y", ["x"], [], "g", "total")
    assert lmm["variant"] == "multilevel"
    assert lmm["body"]["pseudo_r2_definition"] == "total-variance"

    # Errors surface as ValueError.
    try:
        effsize.global_f2(1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("global_f2(1.0) should raise")

    shutil.rmtree(stage_dir, ignore_errors=True)
    print("effsize_py smoke test OK")


if __name__ == "__main__":
    main()
