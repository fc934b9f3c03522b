"""Run configuration: built-in defaults < config file < command-line flags.

Config files are flat ``key = value`` text; ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .paths import NoiseSchedule
from .sampling import DECODE_MODES, GUIDANCE_MODES, SampleRunConfig
from .simplex import ValidationError
from .training import TrainConfig


@dataclass
class RunConfig:
    # schedule
    a: float = 3.0
    kappa: float = 0.0
    eps_t: float = 1e-3
    # sampler
    T: int = 64
    correctors: int = 0
    decode: str = "sample"
    count: int = 100
    # training
    model: str = "dense"
    gamma: float | None = None
    lr: float = 1e-3
    optimizer: str = "momentum"
    momentum: float = 0.9
    steps: int = 20_000
    batch_size: int = 64
    hidden: int = 64
    rounds: int = 2
    # guidance
    guidance: str = "none"
    omega: float = 1.0
    target: float | None = None
    # data
    K: int | None = None
    K_v: int = 1
    K_e: int = 2
    # evaluation
    runs: int = 1
    n_perm: int = 200
    # calibration
    points: int = 50
    # global
    seed: int = 0
    threads: int = 1
    # files
    dataset: str | None = None
    reference: str | None = None
    checkpoint: str | None = None
    out: str | None = None

    def validate(self) -> "RunConfig":
        NoiseSchedule(self.a, self.kappa, self.eps_t)
        SampleRunConfig(T=self.T, correctors_per_step=self.correctors, decode=self.decode)
        TrainConfig(gamma=1.0 if self.gamma is None else self.gamma, lr=self.lr,
                    optimizer=self.optimizer, momentum=self.momentum, steps=self.steps,
                    batch_size=self.batch_size, seed=self.seed)
        if self.model not in ("dense", "mpnn"):
            raise ValidationError(f"model must be 'dense' or 'mpnn', got {self.model!r}")
        if self.guidance not in GUIDANCE_MODES:
            raise ValidationError(f"guidance must be one of {GUIDANCE_MODES}")
        if self.decode not in DECODE_MODES:
            raise ValidationError(f"decode must be one of {DECODE_MODES}")
        if self.guidance != "none" and not self.omega > 0:
            raise ValidationError("omega must be positive when guidance is on")
        for name in ("count", "runs", "hidden", "rounds", "threads", "n_perm", "points"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")
        if self.K is not None and self.K < 2:
            raise ValidationError("K must be at least 2")
        if self.K_v < 1 or self.K_e < 2:
            raise ValidationError("K_v must be >= 1 and K_e >= 2")
        return self

    def schedule(self) -> NoiseSchedule:
        return NoiseSchedule(self.a, self.kappa, self.eps_t)

    def train_config(self, graph: bool) -> TrainConfig:
        gamma = self.gamma if self.gamma is not None else (0.5 if graph else 1.0)
        return TrainConfig(gamma=gamma, lr=self.lr, optimizer=self.optimizer,
                           momentum=self.momentum, steps=self.steps,
                           batch_size=self.batch_size, seed=self.seed)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw):
    kind = FIELD_TYPES[key]
    if raw is None:
        return None
    if not isinstance(raw, str):
        return raw
    if raw.strip().lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError as exc:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r}") from exc
    return raw.strip()


def read_config_file(path) -> dict:
    path = Path(path)
    out = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in FIELD_TYPES:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _convert(key, value)
    return out


def resolve_config(cli: dict, file_values: dict | None = None) -> RunConfig:
    """Merge with precedence CLI > file > defaults; ``None`` CLI values mean 'unset'."""
    merged = dict(file_values or {})
    for key, value in cli.items():
        if key in FIELD_TYPES and value is not None:
            merged[key] = _convert(key, value)
    return dataclasses.replace(RunConfig(), **merged).validate()
