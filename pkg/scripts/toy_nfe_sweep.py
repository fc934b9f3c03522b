#!/usr/bin/env python3
"""TV distance to the data distribution as a function of the number of steps.

Uses the toy dataset (L=3, K=3, four atoms), either with the exact posterior
or with a DenseDenoiser trained for ``--steps`` iterations.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from unside.models import DenseDenoiser, ExactPosterior
from unside.paths import DirichletPath, NoiseSchedule
from unside.sampling import SampleRunConfig, dataset_state_distribution, empirical_state_distribution, \
    sample, total_variation
from unside.toys import toy_atom_dataset
from unside.training import TrainConfig, train


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", choices=("exact", "dense"), default="exact")
    ap.add_argument("--T", default="1,2,4,8,16,32,64,128")
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    data = toy_atom_dataset()
    path = DirichletPath(NoiseSchedule(a=3.0), K=3)
    if args.model == "exact":
        model = ExactPosterior(data, path)
    else:
        t0 = time.perf_counter()
        model, trace = train(DenseDenoiser(data.layout, hidden=64, seed=args.seed), data, path,
                             TrainConfig(steps=args.steps, seed=args.seed))
        print(f"trained in {time.perf_counter() - t0:.1f}s, last-1k loss {trace[-1000:].mean():.4f}")
    target = dataset_state_distribution(data.atoms["x"], data.weights, 3)

    print(f"{'T':>5} {'TV':>8} {'sec':>6}")
    for T in map(int, args.T.split(",")):
        t0 = time.perf_counter()
        out = sample(model, SampleRunConfig(T=T), path, np.random.default_rng(args.seed), n=args.n)
        tv = total_variation(empirical_state_distribution(out["x"], 3), target)
        print(f"{T:5d} {tv:8.4f} {time.perf_counter() - t0:6.2f}")


if __name__ == "__main__":
    main()
