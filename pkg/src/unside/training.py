"""Training loop for the trainable denoisers and the checkpoint format."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .models import AtomDataset, TrainableModel, build_model
from .paths import DirichletPath, noise_forward_multi
from .simplex import ValidationError
from .state import MultiSimplexState

CKPT_FORMAT = "unside-ckpt-v1"


class TrainingError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


class CheckpointFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 1.0
    lr: float = 1e-3
    optimizer: str = "momentum"
    momentum: float = 0.9
    steps: int = 20_000
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValidationError("gamma must lie in [0, 1]")
        if not self.lr > 0:
            raise ValidationError("learning rate must be positive")
        if self.optimizer not in ("sgd", "momentum"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError("momentum must lie in [0, 1)")
        if self.steps < 0 or self.batch_size < 1:
            raise ValidationError("steps must be >= 0 and batch_size >= 1")


def noisy_batch(dataset: AtomDataset, path: DirichletPath, n: int, rng: np.random.Generator,
                t=None):
    """Clean draws, their noised states and times ``t ~ U(0, t_max)``."""
    clean = dataset.sample(n, rng)
    if t is None:
        t = rng.uniform(0.0, path.schedule.t_max, size=n)
    noisy = noise_forward_multi(path, clean, t, rng, dataset.K)
    return clean, MultiSimplexState(noisy, t)


def train(model: TrainableModel, dataset: AtomDataset, path: DirichletPath,
          config: TrainConfig, rng: np.random.Generator | None = None, log_every: int = 0):
    """Minimise the weighted NLL with (momentum) SGD. Returns ``(model, loss_trace)``."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    beta = config.momentum if config.optimizer == "momentum" else 0.0
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    trace = np.empty(config.steps)
    for step in range(config.steps):
        clean, state = noisy_batch(dataset, path, config.batch_size, rng)
        loss, grads = model.loss_and_grad(clean, state, config.gamma)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(step, loss)
        for k, g in grads.items():
            velocity[k] = beta * velocity[k] + g
            model.params[k] -= config.lr * velocity[k]
        trace[step] = loss
        if log_every and step % log_every == 0:
            print(f"step {step:6d}  loss {loss:.4f}")
    return model, trace


# --------------------------------------------------------------------------
# Checkpoints: u64 little-endian header length, JSON header, raw <f8 data.


def save_checkpoint(model: TrainableModel, path, extra: dict | None = None) -> None:
    names = model.param_names()
    header = {
        "format": CKPT_FORMAT,
        "model": model.kind,
        "config": model.config(),
        "dtype": "<f8",
        "params": [{"name": k, "shape": list(model.params[k].shape)} for k in names],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for k in names:
            fh.write(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())


def read_checkpoint_header(path) -> dict:
    with Path(path).open("rb") as fh:
        raw = fh.read(8)
        if len(raw) != 8:
            raise CheckpointFormatError(f"{path}: truncated checkpoint")
        (n,) = struct.unpack("<Q", raw)
        try:
            header = json.loads(fh.read(n).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"{path}: unreadable checkpoint header") from exc
    if header.get("format") != CKPT_FORMAT:
        raise CheckpointFormatError(
            f"{path}: checkpoint format {header.get('format')!r}, expected {CKPT_FORMAT!r}")
    return header


def load_checkpoint(path) -> TrainableModel:
    header = read_checkpoint_header(path)
    model = build_model(header["model"], header["config"])
    with Path(path).open("rb") as fh:
        (n,) = struct.unpack("<Q", fh.read(8))
        fh.seek(8 + n)
        for spec in header["params"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise CheckpointFormatError(f"{path}: truncated parameter {spec['name']!r}")
            model.params[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).astype(float)
        if fh.read(1):
            raise CheckpointFormatError(f"{path}: trailing bytes after parameters")
    if set(model.params) != {s["name"] for s in header["params"]}:
        raise CheckpointFormatError(f"{path}: parameter names do not match model {header['model']!r}")
    return model


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
