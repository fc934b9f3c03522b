"""Voronoi probabilities of the Dirichlet path and schedule calibration.

For ``x ~ Dir(1 + alpha e_i)`` the probability that ``x`` stays in the
Voronoi region of vertex i is

    sum_{k=0}^{K-1} (-1)^k C(K-1, k) / (k + 1)^(alpha + 1)

The exponent ``alpha + 1`` is the concentration on coordinate i (Gamma
representation, one ``Gamma(1 + alpha)`` against K-1 ``Exp(1)`` variates).
:func:`voronoi_prob_mc` and :func:`voronoi_prob_quadrature` are independent
checks of it.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import mpmath
import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .paths import NoiseSchedule, alpha_of_t
from .simplex import DirichletParams, ValidationError, nearest_vertex, sample_dirichlet

MAX_K = 64


@dataclass(frozen=True)
class VoronoiQuery:
    K: int
    alpha: float

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError("K must be at least 2")
        if not self.alpha >= 0 or not math.isfinite(self.alpha):
            raise ValidationError("alpha must be a finite non-negative number")


def voronoi_prob_closed_form(q: VoronoiQuery) -> float:
    if q.K > MAX_K:
        raise ValidationError(f"closed form supports K <= {MAX_K}, got {q.K}")
    # The alternating sum loses ~K bits to cancellation; carry enough guard digits.
    with mpmath.workdps(30 + q.K // 3):
        expo = mpmath.mpf(q.alpha) + 1
        total = mpmath.fsum(
            (-1) ** k * math.comb(q.K - 1, k) / mpmath.power(k + 1, expo)
            for k in range(q.K)
        )
        p = float(total)
    return min(1.0, max(0.0, p))


def voronoi_prob_printed_exponent(q: VoronoiQuery) -> float:
    """Same alternating sum with exponent ``alpha - 1``; kept to show it disagrees."""
    with mpmath.workdps(30 + q.K // 3):
        expo = mpmath.mpf(q.alpha) - 1
        return float(mpmath.fsum(
            (-1) ** k * math.comb(q.K - 1, k) / mpmath.power(k + 1, expo)
            for k in range(q.K)
        ))


def voronoi_prob_quadrature(q: VoronoiQuery) -> float:
    """``E[(1 - e^{-g})^{K-1}]`` for ``g ~ Gamma(1 + alpha)`` by adaptive quadrature."""
    a = q.alpha + 1.0
    log_norm = gammaln(a)

    def integrand(t):
        if t <= 0:
            return 0.0
        return math.exp((a - 1) * math.log(t) - t - log_norm) * (-math.expm1(-t)) ** (q.K - 1)

    val, _ = integrate.quad(integrand, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def voronoi_prob_mc(q: VoronoiQuery, n_samples: int, rng: np.random.Generator,
                    chunk: int = 200_000) -> tuple[float, float]:
    """Fraction of ``Dir(1 + alpha e_0)`` draws whose nearest vertex is 0."""
    if n_samples < 1000:
        raise ValidationError("n_samples must be at least 1000")
    conc = np.ones(q.K)
    conc[0] += q.alpha
    hits = 0
    left = n_samples
    while left:
        m = min(chunk, left)
        x = sample_dirichlet(DirichletParams(conc), rng, size=m)
        hits += int(np.count_nonzero(nearest_vertex(x) == 0))
        left -= m
    p = hits / n_samples
    return p, math.sqrt(p * (1.0 - p) / n_samples)


class CalibrationCurve(NamedTuple):
    t: np.ndarray
    alpha: np.ndarray
    voronoi_prob: np.ndarray

    def rows(self):
        return list(zip(self.t.tolist(), self.alpha.tolist(), self.voronoi_prob.tolist()))

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "alpha", "voronoi_prob"])
            for t, a, p in self.rows():
                w.writerow([repr(t), repr(a), repr(p)])

    @classmethod
    def from_csv(cls, path) -> "CalibrationCurve":
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["t", "alpha", "voronoi_prob"]:
                raise ValidationError(f"{path}: unexpected CSV header {reader.fieldnames}")
            rows = [(float(r["t"]), float(r["alpha"]), float(r["voronoi_prob"])) for r in reader]
        cols = np.array(rows, dtype=float).reshape(-1, 3).T
        return cls(cols[0], cols[1], cols[2])


def calibration_curve(schedule: NoiseSchedule, K: int, n_points: int) -> CalibrationCurve:
    """Voronoi probability on a uniform grid of ``n_points`` times in ``[0, t_max]``."""
    if n_points < 2:
        raise ValidationError("n_points must be at least 2")
    t = np.linspace(0.0, schedule.t_max, n_points)
    alpha = np.asarray(alpha_of_t(schedule, t), dtype=float)
    p = np.array([voronoi_prob_closed_form(VoronoiQuery(K, float(a))) for a in alpha])
    return CalibrationCurve(t, alpha, p)


def stationary_vertex_histogram(weights: np.ndarray, alpha: float) -> np.ndarray:
    """Nearest-vertex law of ``sum_k w_k Dir(1 + alpha e_k)`` for a single dimension.

    Off-origin mass is spread evenly over the other K-1 vertices by symmetry.
    """
    w = np.asarray(weights, dtype=float)
    K = w.size
    pv = voronoi_prob_closed_form(VoronoiQuery(K, alpha))
    return w * pv + (1.0 - w) * (1.0 - pv) / (K - 1)
