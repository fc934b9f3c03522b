import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unside.simplex import (
    EPS_X,
    DirichletParams,
    MarginalMixturePrior,
    ValidationError,
    clamp_to_simplex,
    dirichlet_log_density,
    is_on_simplex,
    nearest_vertex,
    one_hot,
    sample_categorical,
    sample_dirichlet,
    sample_gamma,
    sample_marginal_prior,
    vertex,
)

N = 100_000


def _mean_ok(draws, expected, n_sigma=3.0):
    se = draws.std(axis=0, ddof=1) / math.sqrt(draws.shape[0])
    return np.all(np.abs(draws.mean(axis=0) - expected) <= n_sigma * se)


class TestGamma:
    def test_exponential_mean(self, rng):
        g = sample_gamma(1.0, rng, size=N)
        assert abs(g.mean() - 1.0) <= 3 * g.std() / math.sqrt(N)

    def test_shape_four_moments(self, rng):
        g = sample_gamma(4.0, rng, size=N)
        assert abs(g.mean() - 4.0) <= 3 * math.sqrt(4.0 / N)
        # Var(s^2) ~ (mu4 - sigma^4) / n with mu4 = 3k^2 + 6k for Gamma(k)
        se_var = math.sqrt((3 * 16 + 6 * 4 - 16) / N)
        assert abs(g.var(ddof=1) - 4.0) <= 3 * se_var

    def test_small_shape_mean(self, rng):
        g = sample_gamma(0.3, rng, size=N)
        assert np.all(g > 0)
        assert abs(g.mean() - 0.3) <= 3 * math.sqrt(0.3 / N)

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
    def test_rejects_bad_shape(self, bad, rng):
        with pytest.raises(ValidationError):
            sample_gamma(bad, rng)

    def test_scalar_returns_float(self, rng):
        assert isinstance(sample_gamma(2.5, rng), float)

    def test_deterministic_given_seed(self):
        a = sample_gamma([0.5, 2.0, 7.0], np.random.default_rng(3), size=(10, 3))
        b = sample_gamma([0.5, 2.0, 7.0], np.random.default_rng(3), size=(10, 3))
        assert np.array_equal(a, b)


class TestDirichlet:
    def test_uniform_mean(self, rng):
        x = sample_dirichlet(np.ones(3), rng, size=N)
        assert _mean_ok(x, np.full(3, 1 / 3))

    def test_concentrated_mean(self, rng):
        x = sample_dirichlet(np.array([4.0, 1.0, 1.0]), rng, size=N)
        assert _mean_ok(x[:, :1], np.array([2 / 3]))

    def test_huge_concentration(self, rng):
        x = sample_dirichlet(np.array([1e6, 1.0, 1.0]), rng, size=10_000)
        assert np.mean(x[:, 0] > 0.99) > 0.999

    @pytest.mark.parametrize("K", [2, 3, 5])
    @pytest.mark.parametrize("kind", ["uniform", "tilted"])
    def test_means_four_se(self, K, kind, rng):
        alpha = np.ones(K) if kind == "uniform" else 1.0 + 3.0 * np.eye(K)[0]
        x = sample_dirichlet(alpha, rng, size=N)
        assert _mean_ok(x, alpha / alpha.sum(), n_sigma=4.0)

    def test_draws_on_simplex(self, rng):
        x = sample_dirichlet(np.array([0.01, 0.01, 0.01]), rng, size=10_000)
        assert is_on_simplex(x)
        assert x.min() >= EPS_X

    def test_normalisation_preserves_argmax(self, rng):
        # the draw is g / sum(g) for one joint Gamma draw, so the orders agree
        alpha = np.array([2.0, 0.5, 3.0, 1.0])
        g = sample_gamma(np.broadcast_to(alpha, (5000, 4)), np.random.default_rng(9))
        x = sample_dirichlet(DirichletParams(np.broadcast_to(alpha, (5000, 4))), np.random.default_rng(9))
        assert np.array_equal(np.argmax(g, axis=1), nearest_vertex(x))

    def test_params_validation(self):
        with pytest.raises(ValidationError):
            DirichletParams(np.array([1.0, 0.0]))
        with pytest.raises(ValidationError):
            DirichletParams(np.array([1.0]))


class TestLogDensity:
    @pytest.mark.parametrize("K", [2, 3, 6])
    def test_uniform_density(self, K, rng):
        x = sample_dirichlet(np.ones(K), rng, size=20)
        assert np.allclose(dirichlet_log_density(np.ones(K), x), math.log(math.factorial(K - 1)))

    def test_beta_four_one(self):
        assert dirichlet_log_density(np.array([4.0, 1.0]), np.array([0.9, 0.1])) == \
            pytest.approx(math.log(2.916), abs=1e-12)

    def test_beta_two_two(self):
        assert dirichlet_log_density(np.array([2.0, 2.0]), np.array([0.5, 0.5])) == \
            pytest.approx(math.log(1.5), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            dirichlet_log_density(np.ones(3), np.array([0.5, 0.5]))

    @pytest.mark.parametrize("K", [2, 3])
    def test_integrates_to_one(self, K, rng):
        # uniform proposal on the simplex has density (K-1)!
        alpha = np.array([3.0, 1.5, 0.8][:K])
        x = sample_dirichlet(np.ones(K), rng, size=200_000)
        ratio = np.exp(dirichlet_log_density(alpha, x)) / math.factorial(K - 1)
        se = ratio.std(ddof=1) / math.sqrt(ratio.size)
        assert abs(ratio.mean() - 1.0) <= 3 * se


class TestPrior:
    def test_kappa_zero_is_uniform(self, rng):
        x = sample_marginal_prior(MarginalMixturePrior(np.array([0.7, 0.2, 0.1]), 0.0), rng, size=N)
        assert _mean_ok(x, np.full(3, 1 / 3))

    def test_point_marginal(self, rng):
        x = sample_marginal_prior(MarginalMixturePrior(np.array([1.0, 0.0]), 2.0), rng, size=N)
        assert _mean_ok(x[:, :1], np.array([0.75]))

    def test_symmetric_mixture(self, rng):
        x = sample_marginal_prior(MarginalMixturePrior(np.array([0.5, 0.5]), 2.0), rng, size=N)
        assert _mean_ok(x, np.array([0.5, 0.5]))

    def test_validation(self):
        with pytest.raises(ValidationError):
            MarginalMixturePrior(np.array([0.6, 0.6]))
        with pytest.raises(ValidationError):
            MarginalMixturePrior(np.array([0.5, 0.5]), -1.0)


class TestGeometry:
    def test_nearest_vertex_examples(self):
        assert nearest_vertex(np.array([0.7, 0.2, 0.1])) == 0
        assert nearest_vertex(np.array([0.5, 0.5])) == 0
        assert nearest_vertex(vertex(2, 3)) == 2

    def test_vertex_representation(self):
        v = vertex(1, 4)
        assert v[1] == 1 - 3 * EPS_X
        assert is_on_simplex(v)

    def test_one_hot_range(self):
        with pytest.raises(ValidationError):
            one_hot(np.array([3]), 3)

    @given(arrays(np.float64, st.integers(2, 8), elements=st.floats(0, 1e3)))
    def test_clamp_lands_on_simplex(self, raw):
        if raw.sum() <= 0:
            raw = raw + 1.0
        x = clamp_to_simplex(raw / raw.sum())
        assert abs(x.sum() - 1) <= 1e-9
        assert x.min() >= EPS_X

    @given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.integers(0, 2**32 - 1))
    def test_categorical_respects_zero_mass(self, p, seed):
        p = np.array(p)
        p[0] = 0.0
        if p.sum() == 0:
            p[1] = 1.0
        draws = sample_categorical(np.broadcast_to(p / p.sum(), (500, p.size)),
                                   np.random.default_rng(seed))
        assert np.all(draws != 0)
