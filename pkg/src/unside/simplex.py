"""Simplex geometry, Gamma/Dirichlet sampling and densities, priors.

Points on the simplex are plain numpy arrays whose last axis holds the K
coordinates; any leading axes are batch axes. Random draws always take an
explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

EPS_X = 1e-10
SUM_TOL = 1e-9


class ValidationError(ValueError):
    """Invalid argument to a library call."""


def clamp_to_simplex(x: np.ndarray, eps: float = EPS_X) -> np.ndarray:
    """Floor every coordinate at ``eps`` and restore unit sum.

    The excess mass is taken from the largest coordinate so the floor holds
    exactly; a vertex ``e_i`` becomes ``1 - (K-1) eps`` on coordinate i.
    """
    x = np.maximum(np.asarray(x, dtype=float), eps)
    excess = x.sum(axis=-1, keepdims=True) - 1.0
    top = np.argmax(x, axis=-1)[..., None]
    np.put_along_axis(x, top, np.take_along_axis(x, top, axis=-1) - excess, axis=-1)
    return x


def is_on_simplex(x: np.ndarray, eps: float = EPS_X, tol: float = SUM_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(np.abs(x.sum(axis=-1) - 1.0) <= tol) and np.all(x >= eps))


def vertex(k: int, K: int, eps: float = EPS_X) -> np.ndarray:
    """Interior representative of the simplex vertex ``e_k``."""
    if not 0 <= k < K:
        raise ValidationError(f"vertex index {k} outside [0, {K})")
    return clamp_to_simplex(np.eye(K)[k], eps)


def one_hot(idx: np.ndarray, K: int) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= K):
        raise ValidationError(f"category index outside [0, {K})")
    return np.eye(K)[idx]


# --------------------------------------------------------------------------
# Gamma and Dirichlet sampling


def _marsaglia_tsang(d: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # Squeeze/rejection for shape >= 1; d = shape - 1/3.
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(d)
    pending = np.arange(d.size)
    while pending.size:
        dp, cp = d[pending], c[pending]
        z = rng.standard_normal(pending.size)
        u = rng.random(pending.size)
        v = (1.0 + cp * z) ** 3
        ok = v > 0
        logv = np.log(np.where(ok, v, 1.0))
        accept = ok & (
            (u < 1.0 - 0.0331 * z**4)
            | (np.log(u) < 0.5 * z * z + dp * (1.0 - v + logv))
        )
        out[pending[accept]] = (dp * v)[accept]
        pending = pending[~accept]
    return out


def sample_gamma(shape, rng: np.random.Generator, size=None) -> np.ndarray | float:
    """Draw from Gamma(shape, rate=1).

    ``shape`` may be an array; ``size`` broadcasts it. Shapes below 1 use the
    boost ``Gamma(a) = Gamma(a + 1) * U**(1/a)``.
    """
    a = np.asarray(shape, dtype=float)
    if not np.all(a > 0) or not np.all(np.isfinite(a)):
        raise ValidationError("Gamma shape must be positive and finite")
    scalar = a.ndim == 0 and size is None
    if size is not None:
        a = np.broadcast_to(a, size)
    flat = np.ascontiguousarray(a, dtype=float).ravel()
    small = flat < 1.0
    g = _marsaglia_tsang(np.where(small, flat + 1.0, flat) - 1.0 / 3.0, rng)
    if small.any():
        u = rng.random(int(small.sum()))
        g[small] *= u ** (1.0 / flat[small])
    g = g.reshape(a.shape)
    return float(g) if scalar else g


@dataclass(frozen=True)
class DirichletParams:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.ndim < 1 or alpha.shape[-1] < 2:
            raise ValidationError("Dirichlet needs at least 2 categories")
        if not np.all(alpha > 0):
            raise ValidationError("Dirichlet concentrations must be positive")
        object.__setattr__(self, "alpha", alpha)

    @property
    def K(self) -> int:
        return self.alpha.shape[-1]


def sample_dirichlet(params: DirichletParams | np.ndarray, rng: np.random.Generator,
                     size=None) -> np.ndarray:
    """Gamma-normalisation draw, clamped to the interior.

    ``params.alpha`` may carry batch axes; ``size`` prepends further ones.
    """
    if not isinstance(params, DirichletParams):
        params = DirichletParams(params)
    alpha = params.alpha
    if size is not None:
        size = (size,) if np.isscalar(size) else tuple(size)
        alpha = np.broadcast_to(alpha, size + alpha.shape)
    g = sample_gamma(alpha, rng)
    return clamp_to_simplex(g / g.sum(axis=-1, keepdims=True))


def dirichlet_log_density(params: DirichletParams | np.ndarray, x: np.ndarray) -> np.ndarray:
    """log Dir(x; alpha), broadcasting over leading axes."""
    if not isinstance(params, DirichletParams):
        params = DirichletParams(params)
    alpha = params.alpha
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != alpha.shape[-1]:
        raise ValidationError(
            f"dimension mismatch: x has K={x.shape[-1]}, alpha has K={alpha.shape[-1]}")
    x = clamp_to_simplex(x)
    log_norm = gammaln(alpha.sum(axis=-1)) - gammaln(alpha).sum(axis=-1)
    return log_norm + ((alpha - 1.0) * np.log(x)).sum(axis=-1)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw along the last axis; one uniform per row."""
    probs = np.asarray(probs, dtype=float)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cdf[..., -1]
    return np.minimum((cdf < u[..., None]).sum(axis=-1), probs.shape[-1] - 1)


def nearest_vertex(x: np.ndarray) -> np.ndarray | int:
    """Index of the Voronoi region containing x (argmax, lowest index on ties)."""
    out = np.argmax(np.asarray(x), axis=-1)
    return int(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MarginalMixturePrior:
    """Mixture ``sum_k m_k Dir(1 + kappa e_k)``; ``kappa = 0`` is Dir(1)."""

    marginals: np.ndarray
    kappa: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.marginals, dtype=float)
        if m.ndim != 1 or m.size < 2:
            raise ValidationError("marginals must be a vector over K >= 2 categories")
        if np.any(m < 0) or abs(m.sum() - 1.0) > SUM_TOL:
            raise ValidationError("marginals must be a probability vector")
        if not self.kappa >= 0:
            raise ValidationError("kappa must be non-negative")
        object.__setattr__(self, "marginals", m)

    @classmethod
    def uniform(cls, K: int) -> "MarginalMixturePrior":
        return cls(np.full(K, 1.0 / K), 0.0)

    @property
    def K(self) -> int:
        return self.marginals.size


def sample_marginal_prior(prior: MarginalMixturePrior, rng: np.random.Generator,
                          size=()) -> np.ndarray:
    size = (size,) if np.isscalar(size) else tuple(size)
    comp = sample_categorical(np.broadcast_to(prior.marginals, size + (prior.K,)), rng)
    alpha = 1.0 + prior.kappa * one_hot(comp, prior.K)
    return sample_dirichlet(DirichletParams(alpha), rng)
