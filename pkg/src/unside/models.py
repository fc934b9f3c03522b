"""Posterior models: exact enumeration over a finite dataset and small
trainable denoisers with hand-written reverse-mode gradients.

Every model maps a :class:`MultiSimplexState` to per-dimension categorical
posteriors, returned as ``{channel: probs}`` with ``probs`` of shape
``(B, L, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import gammaln, log_softmax, logsumexp

from .paths import DirichletPath, alpha_of_t, noise_forward_multi
from .simplex import SUM_TOL, ValidationError, one_hot
from .state import Layout, MultiSimplexState, check_layout, time_features


class PosteriorModel(Protocol):
    layout: Layout

    def evaluate(self, state: MultiSimplexState) -> dict[str, np.ndarray]: ...


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits, axis=-1))


def channel_weights(gamma: float, names) -> dict[str, float]:
    """Loss weight per channel: edges get ``1 - gamma``, everything else ``gamma``."""
    return {n: (1.0 - gamma if n == "edges" else gamma) for n in names}


def nll_and_grad(logits: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean NLL over all (batch, dim) entries and its gradient w.r.t. logits."""
    logp = log_softmax(logits, axis=-1)
    n = target.size
    idx = target[..., None]
    picked = np.take_along_axis(logp, idx, axis=-1)
    grad = np.exp(logp)
    np.put_along_axis(grad, idx, np.take_along_axis(grad, idx, axis=-1) - 1.0, axis=-1)
    return float(-picked.sum() / n), grad / n


def mean_nll(probs: dict[str, np.ndarray], clean: dict[str, np.ndarray],
             weights: dict[str, float] | None = None, floor: float = 1e-300) -> float:
    """Weighted per-element NLL of clean categories under posterior ``probs``."""
    weights = weights or {k: 1.0 for k in probs}
    total = 0.0
    for name, p in probs.items():
        picked = np.take_along_axis(p, np.asarray(clean[name])[..., None], axis=-1)
        total += weights[name] * float(-np.log(np.maximum(picked, floor)).mean())
    return total


# --------------------------------------------------------------------------
# Finite datasets and the exact posterior


@dataclass
class AtomDataset:
    """A distribution with finite support: distinct clean states and their weights."""

    atoms: dict[str, np.ndarray]
    weights: np.ndarray
    K: dict[str, int]

    def __post_init__(self):
        self.atoms = {k: np.asarray(v, dtype=np.int64) for k, v in self.atoms.items()}
        self.weights = np.asarray(self.weights, dtype=float)
        M = self.weights.size
        if M < 1:
            raise ValidationError("dataset needs at least one atom")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > SUM_TOL:
            raise ValidationError("atom weights must be a probability vector")
        for name, a in self.atoms.items():
            if a.ndim != 2 or a.shape[0] != M:
                raise ValidationError(f"channel {name!r} must have shape (M, L)")
            if a.size and (a.min() < 0 or a.max() >= self.K[name]):
                raise ValidationError(f"channel {name!r} has categories outside [0, {self.K[name]})")
        rows = np.concatenate([self.atoms[k] for k in sorted(self.atoms)], axis=1)
        if np.unique(rows, axis=0).shape[0] != M:
            raise ValidationError("atoms must be pairwise distinct")

    @classmethod
    def from_samples(cls, samples: dict[str, np.ndarray], K: dict[str, int]) -> "AtomDataset":
        """Deduplicate samples into atoms weighted by their empirical frequency."""
        names = sorted(samples)
        widths = [np.asarray(samples[n]).shape[1] for n in names]
        rows = np.concatenate([np.asarray(samples[n], dtype=np.int64) for n in names], axis=1)
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        splits = np.cumsum(widths)[:-1]
        parts = np.split(uniq, splits, axis=1)
        return cls(dict(zip(names, parts)), counts / counts.sum(), dict(K))

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def layout(self) -> Layout:
        return {k: (v.shape[1], self.K[k]) for k, v in self.atoms.items()}

    def marginals(self) -> dict[str, np.ndarray]:
        """Category frequencies per channel, pooled over dimensions."""
        out = {}
        for name, a in self.atoms.items():
            per_dim = np.einsum("m,mlk->lk", self.weights, one_hot(a, self.K[name]))
            out[name] = per_dim.mean(axis=0)
        return out

    def dim_marginals(self) -> dict[str, np.ndarray]:
        return {name: np.einsum("m,mlk->lk", self.weights, one_hot(a, self.K[name]))
                for name, a in self.atoms.items()}

    def sample(self, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.choice(self.size, size=n, p=self.weights)
        return {k: v[idx] for k, v in self.atoms.items()}

    def subset(self, mask: np.ndarray) -> "AtomDataset":
        mask = np.asarray(mask, dtype=bool)
        w = self.weights[mask]
        if w.sum() <= 0:
            raise ValidationError("subset has no mass")
        return AtomDataset({k: v[mask] for k, v in self.atoms.items()}, w / w.sum(), self.K)


@dataclass
class ExactPosterior:
    """Bayes posterior over a finite dataset under a Dirichlet path."""

    dataset: AtomDataset
    path: DirichletPath

    @property
    def layout(self) -> Layout:
        return self.dataset.layout

    def atom_log_posterior(self, state: MultiSimplexState) -> np.ndarray:
        """Normalised log posterior over atoms, shape ``(B, M)``."""
        check_layout(state, self.layout)
        alpha = np.asarray(alpha_of_t(self.path.schedule, state.t), dtype=float)
        alpha = np.broadcast_to(alpha, (state.batch_size,))[:, None]
        w = self.dataset.weights
        logw = np.where(w > 0, np.log(np.maximum(w, 1e-300)), -np.inf)[None, :]
        for name, x in state.channels.items():
            atoms = self.dataset.atoms[name]
            L, K = self.layout[name]
            logx = np.log(np.maximum(x, 1e-300))
            # sum_l log x[b, l, atom_m[l]]  -> (B, M)
            gathered = logx[:, np.arange(L)[None, :], atoms].sum(axis=-1)
            # log Dir(x_l; 1 + alpha e_k) = alpha log x_lk + log G(K + alpha) - log G(1 + alpha)
            log_norm = L * (gammaln(K + alpha) - gammaln(1.0 + alpha))
            logw = logw + alpha * gathered + log_norm
        return logw - logsumexp(logw, axis=1, keepdims=True)

    def evaluate(self, state: MultiSimplexState) -> dict[str, np.ndarray]:
        w = np.exp(self.atom_log_posterior(state))
        out = {}
        for name, atoms in self.dataset.atoms.items():
            L, K = self.layout[name]
            oh = one_hot(atoms, K).reshape(atoms.shape[0], L * K)
            p = (w @ oh).reshape(-1, L, K)
            out[name] = p / p.sum(axis=-1, keepdims=True)
        return out


# --------------------------------------------------------------------------
# Trainable models


def _glorot(rng, fan_in, fan_out, scale=1.0):
    return rng.normal(0.0, scale * np.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


class TrainableModel:
    """Shared parameter plumbing for models with hand-written gradients."""

    kind: str = ""
    params: dict[str, np.ndarray]

    def param_names(self) -> list[str]:
        return list(self.params)

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.param_names()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        i = 0
        for k in self.param_names():
            p = self.params[k]
            self.params[k] = np.asarray(flat[i:i + p.size], dtype=float).reshape(p.shape).copy()
            i += p.size

    def flat_grad(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in self.param_names()])

    def zero_(self) -> None:
        for k in self.params:
            self.params[k] = np.zeros_like(self.params[k])

    def config(self) -> dict:
        raise NotImplementedError


class DenseDenoiser(TrainableModel):
    """One-hidden-layer ReLU MLP on the flattened state plus time features,
    with a softmax head per dimension."""

    kind = "dense"

    def __init__(self, layout: Layout, hidden: int = 64, seed: int = 0):
        self.layout = {k: tuple(v) for k, v in sorted(layout.items())}
        self.hidden = hidden
        self.seed = seed
        self.in_dim = sum(L * K for L, K in self.layout.values()) + 2
        self.out_dim = sum(L * K for L, K in self.layout.values())
        rng = np.random.default_rng(seed)
        self.params = {
            "W1": rng.normal(0.0, np.sqrt(2.0 / self.in_dim), (self.in_dim, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0.0, np.sqrt(1.0 / hidden), (hidden, self.out_dim)),
            "b2": np.zeros(self.out_dim),
        }

    def config(self) -> dict:
        return {"layout": {k: list(v) for k, v in self.layout.items()},
                "hidden": self.hidden, "seed": self.seed}

    def features(self, state: MultiSimplexState) -> np.ndarray:
        check_layout(state, self.layout)
        B = state.batch_size
        parts = [state.channels[k].reshape(B, -1) for k in self.layout]
        return np.concatenate(parts + [time_features(state.t, B)], axis=1)

    def _split(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        out, i = {}, 0
        for name, (L, K) in self.layout.items():
            out[name] = flat[:, i:i + L * K].reshape(-1, L, K)
            i += L * K
        return out

    def forward(self, state: MultiSimplexState):
        f = self.features(state)
        z = f @ self.params["W1"] + self.params["b1"]
        h = np.maximum(z, 0.0)
        logits = h @ self.params["W2"] + self.params["b2"]
        return self._split(logits), (f, z, h)

    def evaluate(self, state: MultiSimplexState) -> dict[str, np.ndarray]:
        logits, _ = self.forward(state)
        return {k: softmax_probs(v) for k, v in logits.items()}

    def loss_and_grad(self, clean: dict[str, np.ndarray], state: MultiSimplexState,
                      gamma: float = 1.0):
        logits, (f, z, h) = self.forward(state)
        weights = channel_weights(gamma, self.layout)
        loss = 0.0
        dparts = []
        for name in self.layout:
            l, g = nll_and_grad(logits[name], np.asarray(clean[name]))
            loss += weights[name] * l
            dparts.append((weights[name] * g).reshape(g.shape[0], -1))
        dlogits = np.concatenate(dparts, axis=1)
        dh = dlogits @ self.params["W2"].T
        dz = dh * (z > 0)
        grads = {
            "W1": f.T @ dz,
            "b1": dz.sum(axis=0),
            "W2": h.T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }
        return loss, grads

    def logit_lipschitz_bound(self) -> float:
        """Operator-norm bound on how much logits move per unit input change."""
        return float(np.linalg.norm(self.params["W1"], 2) * np.linalg.norm(self.params["W2"], 2))


def edges_to_dense(edges: np.ndarray, n: int) -> np.ndarray:
    """(B, n(n-1)/2, K) upper-triangle values -> symmetric (B, n, n, K), zero diagonal."""
    B, _, K = edges.shape
    iu, ju = np.triu_indices(n, 1)
    dense = np.zeros((B, n, n, K))
    dense[:, iu, ju] = edges
    dense[:, ju, iu] = edges
    return dense


def n_from_edges(L_e: int) -> int:
    n = int(round((1 + np.sqrt(1 + 8 * L_e)) / 2))
    if n * (n - 1) // 2 != L_e:
        raise ValidationError(f"{L_e} edge dimensions is not n(n-1)/2 for any n")
    return n


class MiniMPNN(TrainableModel):
    """Permutation-equivariant message passing over a dense noisy graph.

    Each round computes ``h_ij = relu(x_i W_src + x_j W_trg + e_ij W_edge + b)``,
    then ``e_ij += h_ij F_edge`` and ``x_i += sum_{j != i} h_ij F_node``.
    Edge logits are averaged over ``(i, j)`` and ``(j, i)``.
    """

    kind = "mpnn"

    def __init__(self, n: int, K_e: int = 2, K_v: int = 1, hidden: int = 16,
                 rounds: int = 2, seed: int = 0):
        if n < 2:
            raise ValidationError("MiniMPNN needs at least 2 nodes")
        self.n, self.K_e, self.K_v = n, K_e, K_v
        self.hidden, self.rounds, self.seed = hidden, rounds, seed
        self.d_e = max(1, hidden // 4)
        self.layout = {"edges": (n * (n - 1) // 2, K_e)}
        if K_v > 1:
            self.layout["nodes"] = (n, K_v)
        self.layout = dict(sorted(self.layout.items()))
        d, de = hidden, self.d_e
        fv = (K_v if K_v > 1 else 0) + 2
        rng = np.random.default_rng(seed)
        p = {
            "Wv_in": _glorot(rng, fv, d), "bv_in": np.zeros(d),
            "We_in": _glorot(rng, K_e, de), "be_in": np.zeros(de),
        }
        for r in range(rounds):
            p[f"Wsrc{r}"] = _glorot(rng, d, de)
            p[f"Wtrg{r}"] = _glorot(rng, d, de)
            p[f"Wedge{r}"] = _glorot(rng, de, de)
            p[f"bh{r}"] = np.zeros(de)
            p[f"Fe{r}"] = _glorot(rng, de, de, 0.5)
            p[f"Fn{r}"] = _glorot(rng, de, d, 0.5 / np.sqrt(n))
        p["We_out"] = _glorot(rng, de, K_e)
        p["be_out"] = np.zeros(K_e)
        if K_v > 1:
            p["Wv_out"] = _glorot(rng, d, K_v)
            p["bv_out"] = np.zeros(K_v)
        self.params = p

    def config(self) -> dict:
        return {"n": self.n, "K_e": self.K_e, "K_v": self.K_v, "hidden": self.hidden,
                "rounds": self.rounds, "seed": self.seed}

    def forward(self, state: MultiSimplexState):
        check_layout(state, self.layout)
        p, n = self.params, self.n
        B = state.batch_size
        tf = np.broadcast_to(time_features(state.t, B)[:, None, :], (B, n, 2))
        U = np.concatenate([state.channels["nodes"], tf], axis=-1) if self.K_v > 1 else tf
        Ein = edges_to_dense(state.channels["edges"], n)
        mask = 1.0 - np.eye(n)
        X = U @ p["Wv_in"] + p["bv_in"]
        E = Ein @ p["We_in"] + p["be_in"]
        cache = {"U": U, "Ein": Ein, "mask": mask, "rounds": []}
        for r in range(self.rounds):
            pre = ((X @ p[f"Wsrc{r}"])[:, :, None, :] + (X @ p[f"Wtrg{r}"])[:, None, :, :]
                   + E @ p[f"Wedge{r}"] + p[f"bh{r}"])
            H = np.maximum(pre, 0.0)
            agg = (H * mask[None, :, :, None]).sum(axis=2)
            cache["rounds"].append((X, E, pre, H, agg))
            E = E + H @ p[f"Fe{r}"]
            X = X + agg @ p[f"Fn{r}"]
        cache["X"], cache["E"] = X, E
        EL = E @ p["We_out"] + p["be_out"]
        S = 0.5 * (EL + EL.transpose(0, 2, 1, 3))
        iu, ju = np.triu_indices(n, 1)
        logits = {"edges": S[:, iu, ju]}
        if self.K_v > 1:
            logits["nodes"] = X @ p["Wv_out"] + p["bv_out"]
        return logits, cache

    def evaluate(self, state: MultiSimplexState) -> dict[str, np.ndarray]:
        logits, _ = self.forward(state)
        return {k: softmax_probs(v) for k, v in logits.items()}

    def backward(self, cache, dlogits: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        p, n = self.params, self.n
        X, E, mask = cache["X"], cache["E"], cache["mask"]
        B = X.shape[0]
        g = {}
        iu, ju = np.triu_indices(n, 1)
        dS = np.zeros((B, n, n, self.K_e))
        dS[:, iu, ju] = dlogits["edges"]
        dEL = 0.5 * (dS + dS.transpose(0, 2, 1, 3))
        g["We_out"] = np.einsum("bijd,bijk->dk", E, dEL)
        g["be_out"] = dEL.sum(axis=(0, 1, 2))
        dE = dEL @ p["We_out"].T
        if self.K_v > 1:
            dn = dlogits["nodes"]
            g["Wv_out"] = np.einsum("bid,bik->dk", X, dn)
            g["bv_out"] = dn.sum(axis=(0, 1))
            dX = dn @ p["Wv_out"].T
        else:
            dX = np.zeros_like(X)
        for r in reversed(range(self.rounds)):
            Xr, Er, pre, H, agg = cache["rounds"][r]
            g[f"Fn{r}"] = np.einsum("bie,bid->ed", agg, dX)
            dagg = dX @ p[f"Fn{r}"].T
            g[f"Fe{r}"] = np.einsum("bije,bijf->ef", H, dE)
            dH = dagg[:, :, None, :] * mask[None, :, :, None] + dE @ p[f"Fe{r}"].T
            dpre = dH * (pre > 0)
            g[f"bh{r}"] = dpre.sum(axis=(0, 1, 2))
            g[f"Wedge{r}"] = np.einsum("bije,bijf->ef", Er, dpre)
            dE = dE + dpre @ p[f"Wedge{r}"].T
            dP = dpre.sum(axis=2)
            dQ = dpre.sum(axis=1)
            g[f"Wsrc{r}"] = np.einsum("bid,bie->de", Xr, dP)
            g[f"Wtrg{r}"] = np.einsum("bjd,bje->de", Xr, dQ)
            dX = dX + dP @ p[f"Wsrc{r}"].T + dQ @ p[f"Wtrg{r}"].T
        g["We_in"] = np.einsum("bijk,bije->ke", cache["Ein"], dE)
        g["be_in"] = dE.sum(axis=(0, 1, 2))
        g["Wv_in"] = np.einsum("bif,bid->fd", cache["U"], dX)
        g["bv_in"] = dX.sum(axis=(0, 1))
        return {k: g[k] for k in p}

    def loss_and_grad(self, clean: dict[str, np.ndarray], state: MultiSimplexState,
                      gamma: float = 0.5):
        logits, cache = self.forward(state)
        weights = channel_weights(gamma, self.layout)
        loss, dlogits = 0.0, {}
        for name in self.layout:
            l, gl = nll_and_grad(logits[name], np.asarray(clean[name]))
            loss += weights[name] * l
            dlogits[name] = weights[name] * gl
        return loss, self.backward(cache, dlogits)


# --------------------------------------------------------------------------
# Property model for classifier guidance


class LinearPropertyRegressor(TrainableModel):
    """Gaussian regressor ``y ~ N(w . phi(x_t, t) + b, sigma2)``.

    ``phi`` is the flattened state followed by the two time features.
    """

    kind = "linear-property"

    def __init__(self, layout: Layout, sigma2: float = 1.0):
        self.layout = {k: tuple(v) for k, v in sorted(layout.items())}
        self.in_dim = sum(L * K for L, K in self.layout.values()) + 2
        if not sigma2 > 0:
            raise ValidationError("sigma2 must be positive")
        self.sigma2 = float(sigma2)
        self.params = {"w": np.zeros(self.in_dim), "b": np.zeros(1)}

    def config(self) -> dict:
        return {"layout": {k: list(v) for k, v in self.layout.items()}, "sigma2": self.sigma2}

    def features(self, state: MultiSimplexState) -> np.ndarray:
        check_layout(state, self.layout)
        B = state.batch_size
        parts = [state.channels[k].reshape(B, -1) for k in self.layout]
        return np.concatenate(parts + [time_features(state.t, B)], axis=1)

    def predict(self, state: MultiSimplexState) -> np.ndarray:
        return self.features(state) @ self.params["w"] + self.params["b"][0]

    def log_likelihood(self, state: MultiSimplexState, y) -> np.ndarray:
        r = np.asarray(y, dtype=float) - self.predict(state)
        return -0.5 * r * r / self.sigma2 - 0.5 * np.log(2 * np.pi * self.sigma2)

    def loss_and_grad(self, y, state: MultiSimplexState):
        """Mean Gaussian NLL and its gradient w.r.t. ``w`` and ``b``."""
        f = self.features(state)
        r = np.asarray(y, dtype=float) - (f @ self.params["w"] + self.params["b"][0])
        B = f.shape[0]
        loss = float(np.mean(0.5 * r * r / self.sigma2) + 0.5 * np.log(2 * np.pi * self.sigma2))
        dpred = -r / (self.sigma2 * B)
        return loss, {"w": f.T @ dpred, "b": np.array([dpred.sum()])}

    def input_gradient(self, state: MultiSimplexState, y) -> dict[str, np.ndarray]:
        """d log p(y | x_t, t) / d x_t, per channel with shape (B, L, K)."""
        r = np.asarray(y, dtype=float) - self.predict(state)
        scale = np.broadcast_to(r / self.sigma2, (state.batch_size,))
        out, i = {}, 0
        for name, (L, K) in self.layout.items():
            w = self.params["w"][i:i + L * K].reshape(L, K)
            out[name] = scale[:, None, None] * w[None]
            i += L * K
        return out


def fit_property_regressor(layout: Layout, dataset_samples: dict[str, np.ndarray],
                           y: np.ndarray, path: DirichletPath, rng: np.random.Generator,
                           n_noisy: int = 20_000, ridge: float = 1e-3) -> LinearPropertyRegressor:
    """Least-squares fit across noise levels ``t ~ U(0, t_max)``."""
    model = LinearPropertyRegressor(layout)
    N = len(np.asarray(y))
    idx = rng.integers(0, N, size=n_noisy)
    t = rng.uniform(0.0, path.schedule.t_max, size=n_noisy)
    clean = {k: np.asarray(v)[idx] for k, v in dataset_samples.items()}
    noisy = noise_forward_multi(path, clean, t, rng, {k: layout[k][1] for k in layout})
    state = MultiSimplexState(noisy, t)
    f = np.concatenate([model.features(state), np.ones((n_noisy, 1))], axis=1)
    target = np.asarray(y, dtype=float)[idx]
    A = f.T @ f + ridge * np.eye(f.shape[1])
    coef = np.linalg.solve(A, f.T @ target)
    model.params["w"] = coef[:-1]
    model.params["b"] = coef[-1:]
    resid = target - f @ coef
    model.sigma2 = float(max(np.mean(resid * resid), 1e-6))
    return model


MODEL_KINDS = {cls.kind: cls for cls in (DenseDenoiser, MiniMPNN, LinearPropertyRegressor)}


def build_model(kind: str, config: dict) -> TrainableModel:
    if kind == "dense":
        return DenseDenoiser({k: tuple(v) for k, v in config["layout"].items()},
                             hidden=config["hidden"], seed=config.get("seed", 0))
    if kind == "mpnn":
        return MiniMPNN(**config)
    if kind == "linear-property":
        return LinearPropertyRegressor({k: tuple(v) for k, v in config["layout"].items()},
                                       sigma2=config["sigma2"])
    raise ValidationError(f"unknown model kind {kind!r}")
