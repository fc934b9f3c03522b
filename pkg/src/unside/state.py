"""Multi-channel noisy states on a product of simplices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import SUM_TOL, ValidationError

# channel name -> (number of dimensions L, number of categories K)
Layout = dict[str, tuple[int, int]]


@dataclass
class MultiSimplexState:
    """A batch of points on ``prod_c S_{K_c}^{L_c}`` at time ``t``.

    ``channels[name]`` has shape ``(B, L, K)``. ``t`` is a scalar, or one time
    per batch row during training.
    """

    channels: dict[str, np.ndarray]
    t: float | np.ndarray = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if np.any(t < 0) or np.any(t >= 1):
            raise ValidationError(f"state time must lie in [0, 1), got {self.t}")
        sizes = {v.shape[0] for v in self.channels.values()}
        if len(sizes) > 1:
            raise ValidationError("channels disagree on batch size")
        for name, v in self.channels.items():
            if v.ndim != 3:
                raise ValidationError(f"channel {name!r} must have shape (B, L, K)")

    @classmethod
    def single(cls, x: np.ndarray, t=0.0, name: str = "x") -> "MultiSimplexState":
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[None]
        return cls({name: x}, t)

    @property
    def batch_size(self) -> int:
        return next(iter(self.channels.values())).shape[0]

    @property
    def layout(self) -> Layout:
        return {k: (v.shape[1], v.shape[2]) for k, v in self.channels.items()}

    @property
    def x(self) -> np.ndarray:
        if len(self.channels) != 1:
            raise ValidationError("state has several channels; index .channels instead")
        return next(iter(self.channels.values()))

    def check_simplex(self, tol: float = SUM_TOL) -> bool:
        return all(np.all(np.abs(v.sum(-1) - 1) <= tol) and np.all(v > 0)
                   for v in self.channels.values())


def check_layout(state: MultiSimplexState, layout: Layout) -> None:
    got = state.layout
    if set(got) != set(layout):
        raise ValidationError(f"state channels {sorted(got)} do not match model {sorted(layout)}")
    for name, shape in layout.items():
        if tuple(got[name]) != tuple(shape):
            raise ValidationError(
                f"channel {name!r}: state has (L, K)={got[name]}, model expects {tuple(shape)}")


def time_features(t, batch: int) -> np.ndarray:
    """``(sin 2 pi t, cos 2 pi t)`` per row, shape ``(B, 2)``."""
    t = np.broadcast_to(np.asarray(t, dtype=float), (batch,))
    return np.stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)], axis=1)
