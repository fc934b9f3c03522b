import json
import struct

import numpy as np
import pytest

from unside.models import DenseDenoiser, LinearPropertyRegressor, MiniMPNN
from unside.training import (
    CKPT_FORMAT,
    CheckpointFormatError,
    TrainConfig,
    TrainingError,
    load_checkpoint,
    read_checkpoint_header,
    save_checkpoint,
    train,
)
from unside.simplex import ValidationError


def test_zero_steps_unchanged(toy_data, toy_path):
    m = DenseDenoiser(toy_data.layout, hidden=8, seed=1)
    before = m.flat_params().copy()
    m, trace = train(m, toy_data, toy_path, TrainConfig(steps=0))
    assert np.array_equal(before, m.flat_params())
    assert trace.size == 0


def test_deterministic_and_finite(toy_data, toy_path):
    cfg = TrainConfig(steps=300, seed=4)
    a, ta = train(DenseDenoiser(toy_data.layout, hidden=8, seed=1), toy_data, toy_path, cfg)
    b, tb = train(DenseDenoiser(toy_data.layout, hidden=8, seed=1), toy_data, toy_path, cfg)
    assert np.array_equal(ta, tb)
    assert np.array_equal(a.flat_params(), b.flat_params())
    assert np.all(np.isfinite(ta))


def test_loss_decreases(toy_data, toy_path):
    _, trace = train(DenseDenoiser(toy_data.layout, hidden=16), toy_data, toy_path,
                     TrainConfig(steps=2000, lr=3e-3))
    assert trace[-200:].mean() < trace[:200].mean()


def test_divergence_reports_step(toy_data, toy_path):
    m = DenseDenoiser(toy_data.layout, hidden=8)
    m.params["W2"][0, 0] = np.nan
    with pytest.raises(TrainingError) as err:
        train(m, toy_data, toy_path, TrainConfig(steps=5))
    assert err.value.step == 0


@pytest.mark.parametrize("kw", [{"gamma": 1.5}, {"lr": 0.0}, {"optimizer": "adamw"},
                                {"momentum": 1.0}, {"batch_size": 0}])
def test_config_validation(kw):
    with pytest.raises(ValidationError):
        TrainConfig(**kw)


@pytest.mark.parametrize("model", [
    DenseDenoiser({"x": (3, 3)}, hidden=8, seed=2),
    MiniMPNN(5, K_v=3, hidden=8, rounds=2, seed=2),
    LinearPropertyRegressor({"edges": (10, 2)}, sigma2=3.0),
])
def test_checkpoint_round_trip(model, tmp_path):
    save_checkpoint(model, tmp_path / "m.ckpt", extra={"note": "x"})
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert type(back) is type(model)
    assert back.config() == model.config()
    assert back.param_names() == model.param_names()
    assert np.array_equal(back.flat_params(), model.flat_params())
    head = read_checkpoint_header(tmp_path / "m.ckpt")
    assert head["format"] == CKPT_FORMAT and head["extra"] == {"note": "x"}


def test_checkpoint_bytes_deterministic(toy_data, toy_path, tmp_path):
    for name in ("a", "b"):
        m, _ = train(DenseDenoiser(toy_data.layout, hidden=8, seed=3), toy_data, toy_path,
                     TrainConfig(steps=50, seed=3))
        save_checkpoint(m, tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_checkpoint_layout(tmp_path):
    m = DenseDenoiser({"x": (2, 2)}, hidden=3)
    save_checkpoint(m, tmp_path / "m")
    raw = (tmp_path / "m").read_bytes()
    (n,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8:8 + n])
    body = np.frombuffer(raw[8 + n:], dtype="<f8")
    assert body.size == sum(int(np.prod(p["shape"])) for p in header["params"])
    assert np.array_equal(body, m.flat_params())


def test_wrong_format_version(tmp_path):
    blob = json.dumps({"format": "unside-ckpt-v0", "model": "dense"}).encode()
    (tmp_path / "old").write_bytes(struct.pack("<Q", len(blob)) + blob)
    with pytest.raises(CheckpointFormatError, match="unside-ckpt-v1"):
        load_checkpoint(tmp_path / "old")


def test_truncated_and_trailing(tmp_path):
    m = DenseDenoiser({"x": (2, 2)}, hidden=3)
    save_checkpoint(m, tmp_path / "m")
    raw = (tmp_path / "m").read_bytes()
    (tmp_path / "short").write_bytes(raw[:-8])
    (tmp_path / "long").write_bytes(raw + b"\0" * 8)
    (tmp_path / "tiny").write_bytes(raw[:3])
    for name in ("short", "long", "tiny"):
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(tmp_path / name)
