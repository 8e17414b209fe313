import numpy as np
import pytest

from l1rto.errors import ConfigError
from l1rto.numkit import smallest_singular_value
from l1rto.priors import (
    L1Prior,
    besov_pointwise_variance,
    build_besov_1d,
    build_besov_2d,
    build_tv_operator,
    haar_basis,
    l1_log_prior,
    read_operator_csv,
    write_operator_csv,
)


def haar_psi(t):
    return np.where((t > 0) & (t < 0.5), 1.0, 0.0) - np.where((t > 0.5) & (t < 1.0), 1.0, 0.0)


def direct_besov_norm(theta, s):
    # coefficient definitions on the midpoint grid, no matrices involved
    n = theta.size
    x = (2 * np.arange(1, n + 1) - 1) / (2 * n)
    total = abs(theta.sum() / n)
    for j in range(int(np.log2(n))):
        for k in range(2**j):
            w = theta @ (2 ** (j / 2) * haar_psi(2**j * x - k)) / n
            total += 2 ** (j * (s - 0.5)) * abs(w)
    return total


class TestTV:
    def test_small_case(self):
        D = build_tv_operator(3)
        np.testing.assert_array_equal(D, [[1, 0, 1], [-1, 1, 0], [0, -1, 1]])
        assert np.linalg.det(D) == pytest.approx(2.0)

    def test_constant_vector(self):
        d = build_tv_operator(10) @ np.full(10, 1.5)
        assert d[0] == 3.0
        np.testing.assert_array_equal(d[1:], 0.0)

    def test_invertible_at_63(self):
        assert smallest_singular_value(build_tv_operator(63)) > 0

    def test_too_small(self):
        with pytest.raises(ConfigError):
            build_tv_operator(1)


class TestBesov:
    def test_two_point_operator(self):
        np.testing.assert_allclose(build_besov_1d(2, 1.0), 0.5 * np.array([[1, 1], [1, -1]]), atol=1e-15)

    @pytest.mark.parametrize("n", [2, 4, 8, 16, 32, 64, 128, 256, 512])
    def test_basis_orthogonal(self, n):
        B = haar_basis(n)
        np.testing.assert_allclose(B @ B.T, np.eye(n), atol=1e-12)

    @pytest.mark.parametrize("s", [1.0, 1.5, 2.0])
    def test_norm_matches_direct(self, s):
        theta = np.random.default_rng(1).normal(size=8)
        assert np.abs(build_besov_1d(8, s) @ theta).sum() == pytest.approx(direct_besov_norm(theta, s), rel=1e-13)

    def test_two_dimensional_small(self):
        D1 = build_besov_1d(2, 1.0)
        D = build_besov_2d(4, 1.0)
        np.testing.assert_allclose(D, np.kron(D1, D1), atol=1e-15)
        np.testing.assert_allclose(np.abs(D), 0.25, atol=1e-15)
        X = np.random.default_rng(2).normal(size=(2, 2))
        vec = lambda A: A.ravel(order="F")  # noqa: E731
        np.testing.assert_allclose(D @ vec(X), vec(D1 @ X @ D1.T), atol=1e-14)

    def test_two_dimensional_invertible(self):
        assert smallest_singular_value(build_besov_2d(256, 1.0)) > 0

    @pytest.mark.parametrize("n", [3, 12, 65])
    def test_rejects_bad_sizes(self, n):
        with pytest.raises(ConfigError):
            build_besov_1d(n, 1.0)

    @pytest.mark.parametrize("n", [8, 36, 4 * 9])
    def test_rejects_bad_2d_sizes(self, n):
        with pytest.raises(ConfigError):
            build_besov_2d(n, 1.0)


class TestLogPrior:
    def test_examples(self):
        P = L1Prior.tv(3, 2.0)
        assert l1_log_prior(P, np.zeros(3)) == 0.0
        assert l1_log_prior(P, np.ones(3)) == -4.0

    def test_homogeneous(self):
        P = L1Prior.besov1d(8, 3.0, 1.5)
        theta = np.random.default_rng(0).normal(size=8)
        for c in (-2.0, 0.5, 3.0):
            assert P.log_density(c * theta) == pytest.approx(abs(c) * P.log_density(theta), rel=1e-13)

    def test_rate_must_be_positive(self):
        with pytest.raises(ConfigError):
            L1Prior(np.eye(2), 0.0)


class TestPointwiseVariance:
    def test_closed_forms(self):
        assert besov_pointwise_variance(2.0) == 14 / 3
        assert besov_pointwise_variance(1.3, levels=0) == 4.0
        for L in (1, 5, 9):
            assert besov_pointwise_variance(1.0, levels=L) == 2 * (1 + (L + 1))

    def test_truncation_converges(self):
        assert besov_pointwise_variance(2.0, levels=60) == pytest.approx(14 / 3, rel=1e-14)

    def test_divergent_order(self):
        with pytest.raises(ValueError):
            besov_pointwise_variance(1.0)

    def test_prior_draws(self):
        # coarse grid, many draws: midpoint variance against the truncated series
        n = 16
        P = L1Prior.besov1d(n, 1.0, 2.0)
        draws = P.sample(100_000, seed=3)
        var = draws[:, n // 2].var()
        assert var == pytest.approx(besov_pointwise_variance(2.0, levels=3), rel=0.05)


def test_operator_csv_round_trip(tmp_path):
    D = build_besov_1d(8, 1.5)
    path = tmp_path / "D.csv"
    write_operator_csv(path, D)
    np.testing.assert_array_equal(read_operator_csv(path), D)
