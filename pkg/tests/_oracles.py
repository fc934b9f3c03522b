"""Independent numerical oracles shared by the unit and acceptance tests."""

import numpy as np


def directional_gradcheck(loss_fn, theta, grad, rng, n_probes=20, h=1e-5):
    """Largest relative error between ``grad . v`` and the central difference of
    ``loss_fn`` along random unit directions ``v``."""
    worst = 0.0
    for _ in range(n_probes):
        v = rng.standard_normal(theta.size)
        v /= np.linalg.norm(v)
        fd = (loss_fn(theta + h * v) - loss_fn(theta - h * v)) / (2 * h)
        an = float(grad @ v)
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-6))
    return worst


def coordinate_gradcheck(loss_fn, theta, grad, idx, h=1e-5):
    worst = 0.0
    for i in idx:
        e = np.zeros_like(theta)
        e[i] = h
        fd = (loss_fn(theta + e) - loss_fn(theta - e)) / (2 * h)
        worst = max(worst, abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-6))
    return worst


def model_gradcheck(model, clean, state, rng, gamma, n_probes=20):
    theta0 = model.flat_params()
    _, grads = model.loss_and_grad(clean, state, gamma)
    g = model.flat_grad(grads)

    def f(theta):
        model.set_flat_params(theta)
        return model.loss_and_grad(clean, state, gamma)[0]

    try:
        return directional_gradcheck(f, theta0, g, rng, n_probes)
    finally:
        model.set_flat_params(theta0)


def permute_edges(edges, perm):
    """Relabel nodes of an upper-triangle edge channel: new (i, j) = old (perm[i], perm[j])."""
    B, L, K = edges.shape
    n = int(round((1 + np.sqrt(1 + 8 * L)) / 2))
    iu, ju = np.triu_indices(n, 1)
    dense = np.zeros((B, n, n, K))
    dense[:, iu, ju] = edges
    dense[:, ju, iu] = edges
    dense = dense[:, perm][:, :, perm]
    return dense[:, iu, ju]


def one_step_kl_mc(pi, pi_tilde, alpha, n, rng):
    """MC estimate (and standard error) of KL between the two-category mixtures
    ``sum_k pi_k Beta-kernel(alpha)`` and the same with ``pi_tilde``; scipy's
    Beta density is used as an independent evaluator."""
    from scipy.stats import beta

    comp = (rng.random(n) < pi[1]).astype(int)
    a = np.where(comp == 0, 1.0 + alpha, 1.0)
    b = np.where(comp == 0, 1.0, 1.0 + alpha)
    u = rng.beta(a, b)  # first coordinate of Dir(1 + alpha e_k)
    k0 = beta.pdf(u, 1.0 + alpha, 1.0)
    k1 = beta.pdf(u, 1.0, 1.0 + alpha)
    lr = np.log(pi[0] * k0 + pi[1] * k1) - np.log(pi_tilde[0] * k0 + pi_tilde[1] * k1)
    return float(lr.mean()), float(lr.std(ddof=1) / np.sqrt(n))


def categorical_kl(p, q):
    p, q = np.asarray(p, float), np.asarray(q, float)
    m = p > 0
    return float(np.sum(p[m] * np.log(p[m] / q[m])))
