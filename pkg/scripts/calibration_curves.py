#!/usr/bin/env python3
"""Voronoi probability along the schedule for several scales ``a``.

Writes one CSV per (a, K) and prints the time at which each curve first
crosses 0.9, which is a rough guide to how much of the trajectory is spent
still undecided.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from unside.paths import NoiseSchedule
from unside.voronoi import calibration_curve


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", default="1,3,10")
    ap.add_argument("--K", default="2,3,5,20")
    ap.add_argument("--points", type=int, default=100)
    ap.add_argument("--out", default="calibration")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'a':>6} {'K':>4} {'t(P>=0.9)':>10}")
    for a in map(float, args.a.split(",")):
        sched = NoiseSchedule(a=a)
        for K in map(int, args.K.split(",")):
            curve = calibration_curve(sched, K, args.points)
            curve.to_csv(out / f"calibration_a{a:g}_K{K}.csv")
            hit = np.flatnonzero(curve.voronoi_prob >= 0.9)
            t90 = f"{curve.t[hit[0]]:.3f}" if hit.size else "never"
            print(f"{a:6g} {K:4d} {t90:>10}")


if __name__ == "__main__":
    main()
