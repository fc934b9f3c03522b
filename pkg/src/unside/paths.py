"""Noise schedules and probability paths on the simplex."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import (
    DirichletParams,
    ValidationError,
    clamp_to_simplex,
    dirichlet_log_density,
    one_hot,
    sample_dirichlet,
)

DEFAULT_A = 3.0
DEFAULT_EPS_T = 1e-3


@dataclass(frozen=True)
class NoiseSchedule:
    """``alpha(t) = kappa - a log(1 - min(t, 1 - eps_t))``."""

    a: float = DEFAULT_A
    kappa_offset: float = 0.0
    eps_t: float = DEFAULT_EPS_T

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError(f"schedule strength a must be positive, got {self.a}")
        if not self.kappa_offset >= 0:
            raise ValidationError("kappa_offset must be non-negative")
        if not 0 < self.eps_t < 1:
            raise ValidationError("eps_t must lie in (0, 1)")

    @property
    def t_max(self) -> float:
        return 1.0 - self.eps_t

    @property
    def alpha_max(self) -> float:
        return alpha_of_t(self, self.t_max)


def alpha_of_t(schedule: NoiseSchedule, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr >= 1):
        raise ValidationError(f"time must lie in [0, 1), got {t}")
    alpha = schedule.kappa_offset - schedule.a * np.log1p(-np.minimum(t_arr, schedule.t_max))
    return float(alpha) if alpha.ndim == 0 else alpha


def time_of_alpha(schedule: NoiseSchedule, alpha: float) -> float:
    """Inverse of :func:`alpha_of_t` on the unclamped range."""
    if alpha < schedule.kappa_offset:
        raise ValidationError("alpha below the schedule's starting concentration")
    return float(-np.expm1(-(alpha - schedule.kappa_offset) / schedule.a))


@dataclass(frozen=True)
class DirichletPath:
    """``q_t(x | x1) = Dir(1 + alpha_t e_{x1})`` on a K-category simplex."""

    schedule: NoiseSchedule = NoiseSchedule()
    K: int = 2

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError("a path needs K >= 2 categories")

    def alpha(self, t):
        return alpha_of_t(self.schedule, t)

    def params(self, x1, t) -> DirichletParams:
        alpha = np.asarray(self.alpha(t), dtype=float)
        oh = one_hot(x1, self.K)
        return DirichletParams(1.0 + alpha.reshape(alpha.shape + (1,) * (oh.ndim - alpha.ndim)) * oh)

    def log_density(self, x, x1, t):
        return dirichlet_log_density(self.params(x1, t), x)


def noise_forward(path: DirichletPath, x1, t, rng: np.random.Generator, K: int | None = None):
    """Draw ``x_t ~ Dir(1 + alpha_t e_{x1})`` independently for every entry of ``x1``.

    ``x1`` is an integer array of any shape; ``t`` is a scalar or broadcasts
    against ``x1``'s leading axis. ``K`` overrides ``path.K`` (mixed-K states).
    """
    K = path.K if K is None else K
    x1 = np.asarray(x1)
    if x1.size and (x1.min() < 0 or x1.max() >= K):
        raise ValidationError(f"clean category outside [0, {K})")
    alpha = np.asarray(alpha_of_t(path.schedule, t), dtype=float)
    if alpha.ndim:
        alpha = alpha.reshape(alpha.shape + (1,) * (x1.ndim - alpha.ndim))
    conc = 1.0 + alpha[..., None] * one_hot(x1, K)
    return sample_dirichlet(DirichletParams(conc), rng)


def noise_forward_multi(path: DirichletPath, x1: dict, t, rng: np.random.Generator,
                        K: dict | None = None) -> dict:
    """Noise each channel of a clean state; channels are processed in key order."""
    out = {}
    for name in sorted(x1):
        out[name] = noise_forward(path, x1[name], t, rng, None if K is None else K[name])
    return out


# --------------------------------------------------------------------------
# Linear interpolant (demonstration only; never used by the sampler)


@dataclass(frozen=True)
class InterpolantPath:
    alpha_bar: float
    K: int = 3

    def __post_init__(self):
        if not 0.0 <= self.alpha_bar <= 1.0:
            raise ValidationError("interpolation weight must lie in [0, 1]")


def interpolant_forward(path: InterpolantPath, x1, x0: np.ndarray) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    e = one_hot(x1, x0.shape[-1])
    return path.alpha_bar * e + (1.0 - path.alpha_bar) * x0


def interpolant_feasible_vertices(x_t: np.ndarray, alpha_bar: float) -> set[int]:
    """Vertices that could have produced ``x_t`` under the interpolant.

    ``x0 >= 0`` forces ``x_t[x1] >= alpha_bar``.
    """
    if not 0.0 < alpha_bar <= 1.0:
        raise ValidationError("interpolation weight must lie in (0, 1]")
    x_t = np.asarray(x_t, dtype=float)
    return {int(j) for j in np.flatnonzero(x_t >= alpha_bar - 1e-12)}


def clean_vertex_state(x1, K: int) -> np.ndarray:
    return clamp_to_simplex(one_hot(x1, K))
