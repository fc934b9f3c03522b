"""Non-Markovian reverse process on the simplex.

Each step draws a clean category per dimension from the model's posterior at
the current state and re-noises it at the next time; the previous noisy state
enters only through that posterior. A corrector step does the same at a fixed
time. Guidance reshapes the per-dimension posteriors before the draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp

from .models import LinearPropertyRegressor, PosteriorModel
from .paths import DirichletPath, noise_forward
from .simplex import (
    DirichletParams,
    MarginalMixturePrior,
    ValidationError,
    dirichlet_log_density,
    nearest_vertex,
    one_hot,
    sample_categorical,
    sample_dirichlet,
    sample_marginal_prior,
)
from .state import MultiSimplexState, check_layout

DECODE_MODES = ("sample", "argmax")
GUIDANCE_MODES = ("none", "classifier-free", "classifier")


@dataclass(frozen=True)
class SampleRunConfig:
    T: int = 64
    correctors_per_step: int = 0
    decode: str = "sample"
    prior: dict[str, MarginalMixturePrior] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValidationError("T must be at least 1")
        if self.correctors_per_step < 0:
            raise ValidationError("correctors_per_step must be non-negative")
        if self.decode not in DECODE_MODES:
            raise ValidationError(f"decode must be one of {DECODE_MODES}")


@dataclass
class GuidanceConfig:
    """``conditional`` is the conditional posterior (classifier-free);
    ``property_model`` and ``target`` drive classifier guidance."""

    mode: str = "none"
    omega: float = 1.0
    conditional: PosteriorModel | None = None
    property_model: LinearPropertyRegressor | None = None
    target: float | np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in GUIDANCE_MODES:
            raise ValidationError(f"guidance mode must be one of {GUIDANCE_MODES}")
        if self.mode != "none":
            if not self.omega >= 0:
                raise ValidationError("guidance scale omega must be non-negative")
        if self.mode == "classifier-free" and self.conditional is None:
            raise ValidationError("classifier-free guidance needs a conditional model")
        if self.mode == "classifier" and (self.property_model is None or self.target is None):
            raise ValidationError("classifier guidance needs a property model and a target")


NO_GUIDANCE = GuidanceConfig()


def guided_posterior_cf(cond: np.ndarray, uncond: np.ndarray, omega: float) -> np.ndarray:
    """Renormalised ``cond**omega * uncond**(1 - omega)``."""
    cond, uncond = np.asarray(cond, dtype=float), np.asarray(uncond, dtype=float)
    if cond.shape != uncond.shape:
        raise ValidationError("conditional and unconditional posteriors differ in shape")
    if omega == 1:
        return cond
    if omega == 0:
        return uncond
    logits = omega * np.log(np.maximum(cond, 1e-300)) + (1 - omega) * np.log(np.maximum(uncond, 1e-300))
    return np.exp(log_softmax(logits, axis=-1))


def guided_posterior_classifier(pi: np.ndarray, grad: np.ndarray, omega: float) -> np.ndarray:
    """Tilt ``pi_k`` by ``exp(omega * grad_k)``: the linearised property
    likelihood evaluated at each component's vertex."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise ValidationError("classifier gradient must be finite")
    logits = np.log(np.maximum(np.asarray(pi, dtype=float), 1e-300)) + omega * grad
    return np.exp(log_softmax(logits, axis=-1))


def classifier_input_gradient(property_model: LinearPropertyRegressor, state: MultiSimplexState,
                              target) -> dict[str, np.ndarray]:
    return property_model.input_gradient(state, target)


def guided_posterior(model: PosteriorModel, state: MultiSimplexState,
                     guidance: GuidanceConfig = NO_GUIDANCE) -> dict[str, np.ndarray]:
    probs = model.evaluate(state)
    if guidance.mode == "classifier-free":
        cond = guidance.conditional.evaluate(state)
        probs = {k: guided_posterior_cf(cond[k], probs[k], guidance.omega) for k in probs}
    elif guidance.mode == "classifier":
        grads = classifier_input_gradient(guidance.property_model, state, guidance.target)
        probs = {k: guided_posterior_classifier(probs[k], grads[k], guidance.omega) for k in probs}
    return probs


def _renoise(probs: dict[str, np.ndarray], t: float, path: DirichletPath,
             rng: np.random.Generator) -> dict[str, np.ndarray]:
    # clean draws then Dirichlet draws, channel by channel in name order
    out = {}
    for name in sorted(probs):
        p = probs[name]
        x1 = sample_categorical(p, rng)
        out[name] = noise_forward(path, x1, t, rng, K=p.shape[-1])
    return out


def denoise_step(model: PosteriorModel, state: MultiSimplexState, t_next: float,
                 path: DirichletPath, rng: np.random.Generator,
                 guidance: GuidanceConfig = NO_GUIDANCE) -> MultiSimplexState:
    t = float(np.asarray(state.t))
    if not t_next > t:
        raise ValidationError(f"t_next={t_next} must exceed the state time {t}; use corrector_step")
    if t_next > path.schedule.t_max:
        raise ValidationError(f"t_next={t_next} beyond t_max={path.schedule.t_max}")
    probs = guided_posterior(model, state, guidance)
    return MultiSimplexState(_renoise(probs, t_next, path, rng), t_next)


def corrector_step(model: PosteriorModel, state: MultiSimplexState, path: DirichletPath,
                   rng: np.random.Generator,
                   guidance: GuidanceConfig = NO_GUIDANCE) -> MultiSimplexState:
    t = float(np.asarray(state.t))
    probs = guided_posterior(model, state, guidance)
    return MultiSimplexState(_renoise(probs, t, path, rng), t)


def sample_prior(layout, n: int, path: DirichletPath, rng: np.random.Generator,
                 prior: dict[str, MarginalMixturePrior] | None = None) -> MultiSimplexState:
    """Initial state at t=0; defaults to the mixture with uniform marginals and
    the schedule's starting concentration."""
    kappa = path.schedule.kappa_offset
    channels = {}
    for name in sorted(layout):
        L, K = layout[name]
        pr = (prior or {}).get(name) or MarginalMixturePrior(np.full(K, 1.0 / K), kappa)
        if pr.K != K:
            raise ValidationError(f"prior for {name!r} has K={pr.K}, expected {K}")
        if abs(pr.kappa - kappa) > 1e-12:
            raise ValidationError(
                f"prior concentration {pr.kappa} differs from the schedule's alpha(0)={kappa}")
        channels[name] = sample_marginal_prior(pr, rng, size=(n, L))
    return MultiSimplexState(channels, 0.0)


def time_grid(T: int, path: DirichletPath, t0: float = 0.0) -> np.ndarray:
    return t0 + np.arange(T) * (path.schedule.t_max - t0) / T


def sample(model: PosteriorModel, config: SampleRunConfig, path: DirichletPath,
           rng: np.random.Generator, n: int = 1, guidance: GuidanceConfig = NO_GUIDANCE,
           trace: list | None = None, init: MultiSimplexState | None = None) -> dict[str, np.ndarray]:
    """Run ``n`` independent chains for ``config.T`` function evaluations.

    Returns decoded clean categories ``{channel: (n, L)}``. When ``trace`` is
    a list, one diagnostic record per step is appended to it.
    """
    state = init if init is not None else sample_prior(model.layout, n, path, rng, config.prior)
    check_layout(state, model.layout)
    grid = time_grid(config.T, path)
    for t_next in grid[1:]:
        state = denoise_step(model, state, float(t_next), path, rng, guidance)
        for _ in range(config.correctors_per_step):
            state = corrector_step(model, state, path, rng, guidance)
        if trace is not None:
            trace.append({"t": float(t_next),
                          "nearest": {k: nearest_vertex(v) for k, v in state.channels.items()}})
    probs = guided_posterior(model, state, guidance)
    if config.decode == "argmax":
        return {k: np.argmax(v, axis=-1) for k, v in sorted(probs.items())}
    return {k: sample_categorical(probs[k], rng) for k in sorted(probs)}


# --------------------------------------------------------------------------
# Kernel densities and oracles


def mixture_log_density(pi: np.ndarray, x: np.ndarray, alpha: float) -> np.ndarray:
    """``log sum_k pi_k Dir(x; 1 + alpha e_k)`` for single-dimension kernels.

    ``pi`` has shape ``(K,)``; ``x`` has shape ``(N, K)``.
    """
    pi = np.asarray(pi, dtype=float)
    K = pi.size
    comps = np.stack([dirichlet_log_density(DirichletParams(1.0 + alpha * np.eye(K)[k]), x)
                      for k in range(K)], axis=-1)
    return logsumexp(comps + np.log(np.maximum(pi, 1e-300)), axis=-1)


def sample_mixture(pi: np.ndarray, alpha: float, n: int, rng: np.random.Generator) -> np.ndarray:
    comp = sample_categorical(np.broadcast_to(pi, (n, len(pi))), rng)
    return sample_dirichlet(DirichletParams(1.0 + alpha * one_hot(comp, len(pi))), rng)


def snis_guided_kernel(pi: np.ndarray, grad: np.ndarray, omega: float, alpha: float,
                       rng: np.random.Generator, n_candidates: int = 32):
    """Draw from ``sum_k pi_k Dir(1 + alpha e_k)`` tilted by ``exp(omega x.grad)``
    via self-normalised importance resampling.

    ``pi`` and ``grad`` have shape ``(..., K)``. Returns the selected points
    and the mixture component each came from.
    """
    pi = np.asarray(pi, dtype=float)
    K = pi.shape[-1]
    cand_pi = np.broadcast_to(pi[..., None, :], pi.shape[:-1] + (n_candidates, K))
    comp = sample_categorical(cand_pi, rng)
    x = sample_dirichlet(DirichletParams(1.0 + alpha * one_hot(comp, K)), rng)
    logw = omega * np.einsum("...mk,...k->...m", x, np.asarray(grad, dtype=float))
    pick = sample_categorical(np.exp(logw - logw.max(axis=-1, keepdims=True)), rng)
    chosen = np.take_along_axis(x, pick[..., None, None], axis=-2)[..., 0, :]
    return chosen, np.take_along_axis(comp, pick[..., None], axis=-1)[..., 0]


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def empirical_state_distribution(samples: np.ndarray, K: int) -> np.ndarray:
    """Histogram over the ``K**L`` joint states of integer samples ``(N, L)``."""
    samples = np.asarray(samples)
    codes = samples @ (K ** np.arange(samples.shape[1]))
    return np.bincount(codes, minlength=K ** samples.shape[1]) / samples.shape[0]


def dataset_state_distribution(atoms: np.ndarray, weights: np.ndarray, K: int) -> np.ndarray:
    atoms = np.asarray(atoms)
    out = np.zeros(K ** atoms.shape[1])
    np.add.at(out, atoms @ (K ** np.arange(atoms.shape[1])), weights)
    return out
