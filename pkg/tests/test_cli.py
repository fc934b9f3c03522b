import csv
import json

import jsonschema
import numpy as np
import pytest

from unside.cli import GUIDANCE_REPORT_SCHEMA, NOISE_DEMO_SCHEMA, main
from unside.dataio import load_dataset, read_jsonl
from unside.graphs import GraphDatasetSpec, generate_dataset, read_graphs_jsonl, write_graphs_jsonl
from unside.paths import interpolant_feasible_vertices
from unside.toys import TOY_ATOMS
from unside.training import load_checkpoint
from unside.voronoi import CalibrationCurve


@pytest.fixture
def toy_file(tmp_path):
    path = tmp_path / "toy.jsonl"
    path.write_text("".join(json.dumps({"x": TOY_ATOMS[i % 4].tolist()}) + "\n" for i in range(40)))
    return path


@pytest.fixture
def graph_files(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_graphs_jsonl(generate_dataset(GraphDatasetSpec("erdos-renyi", 6, 40, 0, p=0.3)), a)
    write_graphs_jsonl(generate_dataset(GraphDatasetSpec("erdos-renyi", 6, 40, 1, p=0.3)), b)
    return a, b


def run(*argv):
    return main([str(a) for a in argv])


class TestCalibrate:
    def test_three_curves(self, tmp_path):
        assert run("calibrate", "--K", "3", "--a", "1,3,10", "--points", "50", "--out", tmp_path) == 0
        curves = {a: CalibrationCurve.from_csv(tmp_path / f"calibration_a{a}_K3.csv") for a in (1, 3, 10)}
        for c in curves.values():
            assert len(c.t) == 50
            assert np.all(np.diff(c.voronoi_prob) >= 0)
            assert c.voronoi_prob[0] == pytest.approx(1 / 3, abs=1e-12)
        assert np.all(curves[10].voronoi_prob[1:] > curves[3].voronoi_prob[1:])

    def test_missing_directory(self, tmp_path):
        assert run("calibrate", "--out", tmp_path / "nope") == 3

    def test_bad_list(self, tmp_path):
        assert run("calibrate", "--a", "x,y", "--out", tmp_path) == 2


class TestNoiseDemo:
    def test_schema_and_geometry(self, tmp_path):
        out = tmp_path / "nd.json"
        assert run("noise-demo", "--count", "3000", "--out", out, "--seed", "2") == 0
        doc = json.loads(out.read_text())
        jsonschema.validate(doc, NOISE_DEMO_SCHEMA)
        interp = {c["t"]: c for c in doc["interpolant"]}[0.75]
        for p, o in zip(interp["points"], interp["origins"]):
            assert interpolant_feasible_vertices(np.array(p), 0.75) == {o}
            assert int(np.argmax(p)) == o
        d0 = {c["t"]: c for c in doc["dirichlet"]}[0.0]
        freq = np.bincount(d0["nearest"], minlength=3) / 3000
        assert np.all(np.abs(freq - 1 / 3) <= 3 * np.sqrt(2 / 9 / 3000))

    def test_deterministic(self, tmp_path):
        run("noise-demo", "--count", "20", "--out", tmp_path / "a.json")
        run("noise-demo", "--count", "20", "--out", tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


class TestTrainSample:
    def test_train_deterministic(self, toy_file, tmp_path):
        for name in ("a", "b"):
            assert run("train", "--dataset", toy_file, "--steps", "200", "--hidden", "8",
                       "--out", tmp_path / f"{name}.ckpt") == 0
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
        with open(tmp_path / "a.ckpt.loss.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 200 and all(np.isfinite(float(r["loss"])) for r in rows)
        assert load_checkpoint(tmp_path / "a.ckpt").hidden == 8

    def test_missing_dataset(self, tmp_path, capsys):
        assert run("train", "--dataset", tmp_path / "missing.jsonl", "--out", tmp_path / "m") == 3
        assert "missing.jsonl" in capsys.readouterr().err

    def test_bad_dataset(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json\n")
        assert run("train", "--dataset", bad, "--out", tmp_path / "m") == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_exit_code(self, toy_file, tmp_path):
        assert run("train", "--dataset", toy_file, "--steps", "200", "--lr", "1e308",
                   "--out", tmp_path / "m") == 4

    def test_mpnn_graph_train_and_sample(self, graph_files, tmp_path):
        a, _ = graph_files
        assert run("train", "--dataset", a, "--model", "mpnn", "--steps", "20", "--hidden", "8",
                   "--out", tmp_path / "g.ckpt") == 0
        assert run("sample", "--checkpoint", tmp_path / "g.ckpt", "--T", "3", "--count", "4",
                   "--out", tmp_path / "s.jsonl") == 0
        gs = read_graphs_jsonl(tmp_path / "s.jsonl")
        assert len(gs) == 4 and all(g.n == 6 for g in gs)

    def test_mpnn_needs_graphs(self, toy_file, tmp_path):
        assert run("train", "--dataset", toy_file, "--model", "mpnn", "--out", tmp_path / "m") == 2

    def test_sample_t1_smoke(self, toy_file, tmp_path):
        run("train", "--dataset", toy_file, "--steps", "10", "--hidden", "4", "--out", tmp_path / "m")
        assert run("sample", "--checkpoint", tmp_path / "m", "--T", "1", "--count", "5",
                   "--out", tmp_path / "s.jsonl", "--trace", tmp_path / "t.jsonl") == 0
        recs = read_jsonl(tmp_path / "s.jsonl")
        assert len(recs) == 5 and all(len(r["x"]) == 3 for r in recs)
        assert load_dataset(tmp_path / "s.jsonl", K=3).samples["x"].shape == (5, 3)

    def test_exact_posterior_and_cf_stream(self, toy_file, tmp_path):
        common = ("--exact-posterior", "--dataset", toy_file, "--T", "8", "--count", "30", "--seed", "3")
        assert run("sample", *common, "--out", tmp_path / "u.jsonl") == 0
        assert run("sample", *common, "--guidance", "classifier-free", "--omega", "1",
                   "--target", "3", "--out", tmp_path / "g.jsonl") == 0
        # with omega=1 the stream is the conditional model's: atoms summing to 3
        sums = {sum(r["x"]) for r in read_jsonl(tmp_path / "g.jsonl")}
        assert sums == {3}

    def test_classifier_guidance_runs(self, graph_files, tmp_path):
        a, _ = graph_files
        assert run("sample", "--exact-posterior", "--dataset", a, "--guidance", "classifier",
                   "--omega", "2", "--target", "10", "--T", "8", "--count", "50",
                   "--out", tmp_path / "s.jsonl") == 0
        assert len(read_graphs_jsonl(tmp_path / "s.jsonl")) == 50

    def test_version_mismatch(self, toy_file, tmp_path):
        run("train", "--dataset", toy_file, "--steps", "1", "--hidden", "4", "--out", tmp_path / "m")
        raw = (tmp_path / "m").read_bytes().replace(b"unside-ckpt-v1", b"unside-ckpt-v9")
        (tmp_path / "old").write_bytes(raw)
        assert run("sample", "--checkpoint", tmp_path / "old", "--out", tmp_path / "s") == 2

    def test_sample_needs_source(self, tmp_path):
        assert run("sample", "--out", tmp_path / "s") == 2


class TestEval:
    def test_same_file(self, graph_files, tmp_path):
        a, _ = graph_files
        assert run("eval", "--samples", a, "--reference", a, "--n-perm", "50", "--out", tmp_path / "e.json") == 0
        rep = json.loads((tmp_path / "e.json").read_text())
        for m in ("degree", "clustering", "spectral"):
            # unbiased estimate on identical samples is at or just below zero
            assert -0.05 <= rep["metrics"][m]["mmd2_mean"] <= 0.0
            assert rep["metrics"][m]["p_value_mean"] > 0.5
            assert "null_p95_mean" in rep["metrics"][m] and "null_p99_mean" in rep["metrics"][m]

    def test_five_runs_and_threads(self, graph_files, tmp_path):
        a, b = graph_files
        for name, threads in (("one", "1"), ("three", "3")):
            assert run("eval", "--samples", a, "--reference", b, "--runs", "5", "--n-perm", "30",
                       "--threads", threads, "--out", tmp_path / f"{name}.json") == 0
        rep = json.loads((tmp_path / "one.json").read_text())
        assert len(rep["metrics"]["degree"]["runs"]) == 5
        assert all(f"{k}_std" in rep["metrics"]["spectral"] for k in ("mmd2", "p_value"))
        assert (tmp_path / "one.json").read_bytes() == (tmp_path / "three.json").read_bytes()

    def test_too_many_runs(self, graph_files, tmp_path):
        a, b = graph_files
        assert run("eval", "--samples", a, "--reference", b, "--runs", "100", "--out", tmp_path / "e") == 2


def test_guidance_demo(tmp_path):
    out = tmp_path / "g.json"
    assert run("guidance-demo", "--T", "16", "--count", "200", "--omega", "2", "--out", out) == 0
    rep = json.loads(out.read_text())
    jsonschema.validate(rep, GUIDANCE_REPORT_SCHEMA)
    assert rep["cf_stream_identical"] is True
    assert rep["all_improved"] is True


def test_guidance_demo_tiny_omega(tmp_path):
    out = tmp_path / "g.json"
    assert run("guidance-demo", "--T", "16", "--count", "400", "--omega", "1e-6", "--out", out) == 0
    for r in json.loads(out.read_text())["runs"]:
        assert r["mae_guided"] == pytest.approx(r["mae_unguided"], abs=0.05)
