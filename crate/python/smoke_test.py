"""Smoke test for the pydelayfw extension module.

Build and run from the repository root:

    cargo build --release -p delayfw-python --features extension-module
    cp target/release/libpydelayfw.so python/pydelayfw.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pydelayfw as fw


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok: {msg}")


def main():
    ball = fw.ConstraintSet("l1_ball", 2.0, 3)
    check(ball.lmo([0.5, -3.0, 1.0]) == [0.0, 2.0, 0.0], "l1 lmo picks the largest coordinate")
    check(abs(ball.diameter() - 4.0) < 1e-12, "l1 diameter")
    p = ball.project([3.0, 0.0, 0.0])
    check(ball.contains(p) and abs(p[0] - 2.0) < 1e-12, "projection lands on the boundary")

    oracle = fw.FtplOracle(ball, 0.1, 7)
    check(all(0.0 <= u <= 1.0 for u in oracle.noise), "oracle noise in the unit cube")
    oracle.feedback([1.0, 0.0, 0.0])
    check(ball.contains(oracle.query()), "oracle query is feasible")

    delays = fw.uniform_delays(50, 5, 3)
    check(len(delays) == 50 and all(1 <= d <= 5 for d in delays), "uniform delays in range")

    w = fw.metropolis("cycle", 6)
    check(all(abs(sum(row) - 1.0) < 1e-12 for row in w), "metropolis rows sum to one")
    lam2, lam_eff, k0 = fw.spectral("complete", 5)
    check(lam_eff < 1e-12 and k0 >= 1, "complete graph mixes in one step")
    check(fw.k0(2.0 / 3.0) == 5, "k0 at lambda 2/3")

    horizon = 40
    targets = [[math.sin(t), math.cos(t), 0.1] for t in range(horizon)]
    losses = fw.delmfw_quadratic(ball, targets, [1] * horizon, 7, 3.0, 0.2, 1)
    delayed = fw.delmfw_quadratic(ball, targets, delays[:horizon], 7, 3.0, 0.2, 1)
    check(len(losses) == horizon and len(delayed) == horizon, "centralized runs return one loss per round")

    dist = fw.de2mfw_quadratic(ball, "complete", [targets], [[1] * horizon], 7, 3.0, 0.2, 1)
    check([row[0] for row in dist] == losses, "single-agent network matches centralized")

    cfg = {
        "mode": "centralized",
        "T": 30,
        "set": {"kind": "simplex", "radius": 1.0},
        "loss": {"kind": "quadratic", "dim": 4},
        "delay": {"dmax": 4},
        "seeds": [1, 2],
    }
    with tempfile.TemporaryDirectory() as out:
        report = fw.run_experiment(json.dumps(cfg), out)
        check(report["seeds"] == [1, 2], "experiment runs every seed")
        check(os.path.exists(os.path.join(out, "summary.csv")), "experiment writes a summary")

    try:
        fw.ConstraintSet("nonsense", 1.0, 2)
    except ValueError:
        print("ok: bad set kind raises ValueError")
    else:
        raise SystemExit("FAIL: bad set kind accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
