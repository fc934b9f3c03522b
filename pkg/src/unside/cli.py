"""Command-line entry point: ``unside <command> [options]``.

Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, read_config_file, resolve_config
from .dataio import LoadedDataset, load_dataset, write_jsonl
from .graphs import (
    METRICS,
    GraphInstance,
    graphs_to_samples,
    metric_histograms,
    mmd_permutation_test,
    read_graphs_jsonl,
    samples_to_graphs,
)
from .models import AtomDataset, DenseDenoiser, ExactPosterior, LinearPropertyRegressor, MiniMPNN, \
    fit_property_regressor, n_from_edges
from .paths import DirichletPath, InterpolantPath, alpha_of_t, interpolant_forward, noise_forward
from .sampling import GuidanceConfig, SampleRunConfig, sample
from .simplex import MarginalMixturePrior, ValidationError, nearest_vertex, sample_dirichlet
from .toys import toy_property_graphs
from .training import CheckpointFormatError, TrainingError, load_checkpoint, read_checkpoint_header, \
    save_checkpoint, train
from .voronoi import calibration_curve

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

NOISE_DEMO_TIMES = (1.0, 0.75, 0.5, 0.25, 0.0)

_cloud = {
    "type": "object",
    "required": ["t", "weight", "points", "origins", "nearest"],
    "properties": {
        "t": {"type": "number", "minimum": 0, "maximum": 1},
        "weight": {"type": "number", "minimum": 0},
        "points": {"type": "array", "items": {"type": "array", "minItems": 3, "maxItems": 3,
                                              "items": {"type": "number", "minimum": 0, "maximum": 1}}},
        "origins": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 2}},
        "nearest": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 2}},
    },
}

NOISE_DEMO_SCHEMA = {
    "type": "object",
    "required": ["K", "times", "schedule", "dirichlet", "interpolant"],
    "properties": {
        "K": {"const": 3},
        "times": {"type": "array", "items": {"type": "number"}},
        "schedule": {"type": "object", "required": ["a", "kappa", "eps_t"]},
        "dirichlet": {"type": "array", "items": _cloud},
        "interpolant": {"type": "array", "items": _cloud},
    },
}

GUIDANCE_REPORT_SCHEMA = {
    "type": "object",
    "required": ["omega", "T", "count", "runs", "all_improved", "cf_stream_identical"],
    "properties": {
        "omega": {"type": "number"},
        "T": {"type": "integer"},
        "count": {"type": "integer"},
        "runs": {"type": "array", "items": {
            "type": "object",
            "required": ["seed", "mae_unguided", "mae_guided"],
            "properties": {"seed": {"type": "integer"}, "mae_unguided": {"type": "number"},
                           "mae_guided": {"type": "number"}},
        }},
        "all_improved": {"type": "boolean"},
        "cf_stream_identical": {"type": "boolean"},
    },
}


# --------------------------------------------------------------------------
# helpers


def _out_path(cfg: RunConfig, default: str) -> Path:
    path = Path(cfg.out or default)
    if path.parent and not path.parent.exists():
        raise FileNotFoundError(f"output directory does not exist: {path.parent}")
    return path


def _write_json(obj, path: Path) -> None:
    with path.open("w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_list(raw: str | None, kind):
    if raw is None:
        return None
    try:
        return [kind(v) for v in str(raw).split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"cannot parse list {raw!r}") from exc


def _require(value, flag: str):
    if value is None:
        raise ValidationError(f"{flag} is required")
    return value


def _load_data(cfg: RunConfig) -> LoadedDataset:
    return load_dataset(_require(cfg.dataset, "--dataset"), K=cfg.K, K_v=cfg.K_v, K_e=cfg.K_e)


def _prior(marginals: dict, layout, kappa: float) -> dict[str, MarginalMixturePrior]:
    out = {}
    for name, (_, K) in layout.items():
        m = np.asarray(marginals.get(name, np.full(K, 1.0 / K)), dtype=float)
        out[name] = MarginalMixturePrior(m / m.sum(), kappa)
    return out


def _records(samples: dict[str, np.ndarray], kind: str, n: int | None) -> list[dict]:
    if kind == "graph":
        return [g.to_json() for g in samples_to_graphs(samples, n)]
    return [{"x": row.tolist()} for row in samples["x"]]


# --------------------------------------------------------------------------
# commands


def cmd_calibrate(cfg: RunConfig, args) -> int:
    a_values = _parse_list(args.a_list, float) or [cfg.a]
    K_values = _parse_list(args.K_list, int) or [cfg.K or 3]
    out_dir = Path(cfg.out or ".")
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out_dir}")
    for a in a_values:
        schedule = RunConfig(a=a, kappa=cfg.kappa, eps_t=cfg.eps_t).validate().schedule()
        for K in K_values:
            curve = calibration_curve(schedule, K, cfg.points)
            path = out_dir / f"calibration_a{a:g}_K{K}.csv"
            curve.to_csv(path)
            print(path)
    return EXIT_OK


def noise_demo(cfg: RunConfig, n_points: int) -> dict:
    rng = np.random.default_rng(cfg.seed)
    schedule = cfg.schedule()
    path = DirichletPath(schedule, K=3)
    origins = rng.integers(0, 3, size=n_points)
    x0 = sample_dirichlet(np.ones(3), rng, size=n_points)
    dirichlet, interp = [], []
    for t in NOISE_DEMO_TIMES:
        t_eff = min(t, schedule.t_max)
        alpha = float(alpha_of_t(schedule, t_eff))
        pts = noise_forward(path, origins, t_eff, rng, K=3)
        dirichlet.append({"t": t, "weight": alpha, "points": pts.tolist(),
                          "origins": origins.tolist(), "nearest": nearest_vertex(pts).tolist()})
        # the interpolant reuses one x0 per point so the clouds form straight trajectories
        ipts = interpolant_forward(InterpolantPath(t, 3), origins, x0)
        interp.append({"t": t, "weight": t, "points": ipts.tolist(),
                       "origins": origins.tolist(), "nearest": nearest_vertex(ipts).tolist()})
    return {"K": 3, "times": list(NOISE_DEMO_TIMES),
            "schedule": {"a": schedule.a, "kappa": schedule.kappa_offset, "eps_t": schedule.eps_t},
            "dirichlet": dirichlet, "interpolant": interp}


def cmd_noise_demo(cfg: RunConfig, args) -> int:
    out = _out_path(cfg, "noise_demo.json")
    _write_json(noise_demo(cfg, cfg.count), out)
    print(out)
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    data = _load_data(cfg)
    graph = data.kind == "graph"
    dataset = data.atoms()
    path = DirichletPath(cfg.schedule(), K=2)
    if cfg.model == "mpnn":
        if not graph:
            raise ValidationError("the message-passing model needs graph data")
        model = MiniMPNN(data.n, K_e=cfg.K_e, K_v=cfg.K_v, hidden=cfg.hidden, rounds=cfg.rounds,
                         seed=cfg.seed)
    else:
        model = DenseDenoiser(dataset.layout, hidden=cfg.hidden, seed=cfg.seed)
    model, trace = train(model, dataset, path, cfg.train_config(graph))
    out = _out_path(cfg, "model.ckpt")
    extra = {"data": data.kind, "n": data.n,
             "marginals": {k: v.tolist() for k, v in dataset.marginals().items()}}
    save_checkpoint(model, out, extra)
    loss_path = out.with_name(out.name + ".loss.csv")
    with loss_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v))])
    print(out)
    return EXIT_OK


def _property_target(cfg: RunConfig, y: np.ndarray) -> float:
    return float(np.median(y)) if cfg.target is None else float(cfg.target)


def _build_guidance(cfg: RunConfig, args, data: LoadedDataset | None, layout, path) -> GuidanceConfig:
    if cfg.guidance == "none":
        return GuidanceConfig()
    if cfg.guidance == "classifier-free":
        if args.conditional:
            cond = load_checkpoint(args.conditional)
        else:
            if data is None:
                raise ValidationError("classifier-free guidance needs --conditional or --dataset")
            y = data.property_values()
            target = _property_target(cfg, y)
            atoms = data.atoms()
            mask = _atom_property(atoms, data.kind) == target
            if not mask.any():
                raise ValidationError(f"no dataset atom has property value {target}")
            cond = ExactPosterior(atoms.subset(mask), path)
        return GuidanceConfig("classifier-free", cfg.omega, conditional=cond)
    y = data.property_values() if data is not None else None
    if args.property_model:
        reg = load_checkpoint(args.property_model)
        if not isinstance(reg, LinearPropertyRegressor):
            raise CheckpointFormatError(f"{args.property_model}: not a property model")
    else:
        if data is None:
            raise ValidationError("classifier guidance needs --property-model or --dataset")
        reg = fit_property_regressor(layout, data.samples, y, path,
                                     np.random.default_rng(cfg.seed + 7919))
    if cfg.target is None and y is None:
        raise ValidationError("--target is required without a dataset")
    target = cfg.target if cfg.target is not None else _property_target(cfg, y)
    return GuidanceConfig("classifier", cfg.omega, property_model=reg, target=float(target))


def _atom_property(atoms: AtomDataset, kind: str) -> np.ndarray:
    if kind == "graph":
        return atoms.atoms["edges"].sum(axis=1).astype(float)
    return atoms.atoms["x"].sum(axis=1).astype(float)


def cmd_sample(cfg: RunConfig, args) -> int:
    path = DirichletPath(cfg.schedule(), K=2)
    data = _load_data(cfg) if cfg.dataset else None
    if args.exact_posterior:
        if data is None:
            raise ValidationError("--exact-posterior needs --dataset")
        atoms = data.atoms()
        model, kind, n, marginals = ExactPosterior(atoms, path), data.kind, data.n, atoms.marginals()
    else:
        ckpt = _require(cfg.checkpoint, "--checkpoint (or --exact-posterior)")
        header = read_checkpoint_header(ckpt)
        model = load_checkpoint(ckpt)
        if isinstance(model, LinearPropertyRegressor):
            raise CheckpointFormatError(f"{ckpt}: a property model cannot be sampled from")
        extra = header.get("extra", {})
        kind = extra.get("data", "graph" if header["model"] == "mpnn" else "categorical")
        n = extra.get("n") or (n_from_edges(model.layout["edges"][0]) if kind == "graph" else None)
        marginals = extra.get("marginals", {})
    guidance = _build_guidance(cfg, args, data, model.layout, path)
    prior = _prior(marginals, model.layout, cfg.kappa)
    run = SampleRunConfig(T=cfg.T, correctors_per_step=cfg.correctors, decode=cfg.decode,
                          prior=prior, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    trace = [] if args.trace else None
    out = _out_path(cfg, "samples.jsonl")
    samples = sample(model, run, path, rng, n=cfg.count, guidance=guidance, trace=trace)
    write_jsonl(_records(samples, kind, n), out)
    if trace is not None:
        write_jsonl([{"t": r["t"], "nearest": {k: v.tolist() for k, v in r["nearest"].items()}}
                     for r in trace], args.trace)
    print(out)
    return EXIT_OK


def eval_report(generated: list[GraphInstance], reference: list[GraphInstance], runs: int,
                n_perm: int, seed: int, threads: int = 1) -> dict:
    if runs > len(generated):
        raise ValidationError(f"cannot split {len(generated)} graphs into {runs} runs")
    chunks = np.array_split(np.arange(len(generated)), runs)
    # one independent stream per (metric, run): results do not depend on the thread count
    seeds = np.random.SeedSequence(seed).spawn(len(METRICS) * runs)
    ref_h = {m: metric_histograms(reference, m) for m in METRICS}

    def job(i):
        m, r = METRICS[i // runs], i % runs
        gen_h = metric_histograms([generated[j] for j in chunks[r]], m)
        return mmd_permutation_test(gen_h, ref_h[m], np.random.default_rng(seeds[i]), n_perm)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(job, range(len(METRICS) * runs)))
    report = {"runs": runs, "n_generated": len(generated), "n_reference": len(reference),
              "n_perm": n_perm, "metrics": {}}
    for mi, m in enumerate(METRICS):
        rs = results[mi * runs:(mi + 1) * runs]
        entry = {"runs": [r.to_json() for r in rs]}
        for key in ("mmd2", "p_value", "null_p95", "null_p99"):
            vals = np.array([getattr(r, key) for r in rs])
            entry[f"{key}_mean"] = float(vals.mean())
            entry[f"{key}_std"] = float(vals.std(ddof=1)) if runs > 1 else 0.0
        report["metrics"][m] = entry
    return report


def cmd_eval(cfg: RunConfig, args) -> int:
    generated = read_graphs_jsonl(_require(cfg.dataset, "--samples"))
    reference = read_graphs_jsonl(_require(cfg.reference, "--reference"))
    report = eval_report(generated, reference, cfg.runs, cfg.n_perm, cfg.seed, cfg.threads)
    out = _out_path(cfg, "eval.json")
    _write_json(report, out)
    print(out)
    return EXIT_OK


def guidance_demo(cfg: RunConfig, graphs: list[GraphInstance], n_seeds: int = 3) -> dict:
    n = graphs[0].n
    samples = graphs_to_samples(graphs)
    atoms = AtomDataset.from_samples(samples, {"edges": 2})
    y = np.array([g.edge_count for g in graphs], dtype=float)
    path = DirichletPath(cfg.schedule(), K=2)
    model = ExactPosterior(atoms, path)
    run = SampleRunConfig(T=cfg.T, correctors_per_step=cfg.correctors, decode=cfg.decode)
    runs = []
    for s in range(cfg.seed, cfg.seed + n_seeds):
        rng = np.random.default_rng(s)
        reg = fit_property_regressor(atoms.layout, samples, y, path, rng)
        targets = rng.choice(y, size=cfg.count)
        plain = sample(model, run, path, np.random.default_rng([s, 1]), n=cfg.count)
        guided = sample(model, run, path, np.random.default_rng([s, 1]), n=cfg.count,
                        guidance=GuidanceConfig("classifier", cfg.omega, property_model=reg,
                                                target=targets))
        mae_u = float(np.abs(plain["edges"].sum(axis=1) - targets).mean())
        mae_g = float(np.abs(guided["edges"].sum(axis=1) - targets).mean())
        runs.append({"seed": s, "mae_unguided": mae_u, "mae_guided": mae_g,
                     "improved": mae_g < mae_u})
    # classifier-free at omega=1 must reproduce the conditional model's stream exactly
    target = cfg.target if cfg.target is not None else float(np.median(y))
    mask = _atom_property(atoms, "graph") == target
    if not mask.any():
        raise ValidationError(f"no graph has {target} edges")
    cond = ExactPosterior(atoms.subset(mask), path)
    n_cf = min(cfg.count, 200)
    a = sample(cond, run, path, np.random.default_rng(cfg.seed), n=n_cf)
    b = sample(model, run, path, np.random.default_rng(cfg.seed), n=n_cf,
               guidance=GuidanceConfig("classifier-free", 1.0, conditional=cond))
    return {"omega": cfg.omega, "T": cfg.T, "count": cfg.count, "n": n, "runs": runs,
            "all_improved": all(r["improved"] for r in runs),
            "cf_target": target,
            "cf_stream_identical": bool(all(np.array_equal(a[k], b[k]) for k in a))}


def cmd_guidance_demo(cfg: RunConfig, args) -> int:
    if cfg.dataset:
        data = _load_data(cfg)
        if data.kind != "graph":
            raise ValidationError("the guidance demo needs graph data (property = edge count)")
        graphs = data.graphs
    else:
        graphs = toy_property_graphs(seed=cfg.seed)
    report = guidance_demo(cfg, graphs)
    out = _out_path(cfg, "guidance.json")
    _write_json(report, out)
    print(out)
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "noise-demo": cmd_noise_demo,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "guidance-demo": cmd_guidance_demo,
}


# --------------------------------------------------------------------------
# argument parsing


def _global_flags(p: argparse.ArgumentParser, default) -> None:
    p.add_argument("--seed", type=int, default=default)
    p.add_argument("--config", default=default, help="flat 'key = value' file")
    p.add_argument("--out", default=default, help="output file (directory for calibrate)")
    p.add_argument("--threads", type=int, default=default)


def _schedule_flags(p):
    p.add_argument("--kappa", type=float)
    p.add_argument("--eps-t", dest="eps_t", type=float)


def _sampler_flags(p):
    p.add_argument("--a", type=float)
    _schedule_flags(p)
    p.add_argument("--T", type=int)
    p.add_argument("--correctors", type=int)
    p.add_argument("--decode", choices=("sample", "argmax"))
    p.add_argument("--count", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unside", description=__doc__.splitlines()[0])
    _global_flags(parser, None)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)

    p = sub.add_parser("calibrate", parents=[common], help="Voronoi-probability curves (CSV)")
    p.add_argument("--a", dest="a_list", help="comma-separated schedule scales")
    p.add_argument("--K", dest="K_list", help="comma-separated category counts")
    p.add_argument("--points", type=int)
    _schedule_flags(p)

    p = sub.add_parser("noise-demo", parents=[common], help="forward-noised point clouds (JSON)")
    p.add_argument("--a", type=float)
    _schedule_flags(p)
    p.add_argument("--count", type=int, help="points per cloud")

    p = sub.add_parser("train", parents=[common], help="train a denoiser")
    p.add_argument("--dataset")
    p.add_argument("--model", choices=("dense", "mpnn"))
    p.add_argument("--a", type=float)
    _schedule_flags(p)
    for flag, kind in (("--gamma", float), ("--lr", float), ("--momentum", float),
                       ("--steps", int), ("--batch-size", int), ("--hidden", int),
                       ("--rounds", int), ("--K", int), ("--K-v", int), ("--K-e", int)):
        p.add_argument(flag, type=kind, dest=flag[2:].replace("-", "_"))
    p.add_argument("--optimizer", choices=("sgd", "momentum"))

    p = sub.add_parser("sample", parents=[common], help="draw samples (JSONL)")
    _sampler_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--exact-posterior", action="store_true")
    p.add_argument("--dataset")
    p.add_argument("--K", type=int)
    p.add_argument("--K-v", dest="K_v", type=int)
    p.add_argument("--K-e", dest="K_e", type=int)
    p.add_argument("--guidance", choices=("none", "classifier-free", "classifier"))
    p.add_argument("--omega", type=float)
    p.add_argument("--target", type=float)
    p.add_argument("--conditional", help="checkpoint of the conditional denoiser")
    p.add_argument("--property-model", dest="property_model", help="property-model checkpoint")
    p.add_argument("--trace", help="write per-step nearest vertices here (JSONL)")

    p = sub.add_parser("eval", parents=[common], help="graph MMD report (JSON)")
    p.add_argument("--samples", dest="dataset", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--runs", type=int)
    p.add_argument("--n-perm", dest="n_perm", type=int)

    p = sub.add_parser("guidance-demo", parents=[common], help="guided vs unguided MAE (JSON)")
    _sampler_flags(p)
    p.add_argument("--dataset")
    p.add_argument("--omega", type=float)
    p.add_argument("--target", type=float)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    cli = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    return resolve_config(cli, file_values)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg, args)
    except (ValidationError, CheckpointFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"error: {exc.strerror or exc}{where}", file=sys.stderr)
        return EXIT_IO
    except (TrainingError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
