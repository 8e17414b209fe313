import itertools

import numpy as np
import pytest

from l1rto.errors import NonFiniteError, RankDeficientError, SingularMatrixError
from l1rto.numkit import RngStream, log_abs_det_qr, smallest_singular_value, standard_normal, thin_qr


def cofactor_det(M):
    # Leibniz formula, independent of any factorization
    n = M.shape[0]
    total = 0.0
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for i in range(n) for j in range(i + 1, n) if perm[i] > perm[j])
        total += (-1) ** inv * np.prod([M[i, perm[i]] for i in range(n)])
    return total


class TestThinQR:
    def test_identity(self):
        Q, R = thin_qr(np.eye(3))
        np.testing.assert_allclose(Q, np.eye(3), atol=1e-15)
        np.testing.assert_allclose(R, np.eye(3), atol=1e-15)

    def test_column_by_hand(self):
        Q, R = thin_qr(np.array([[3.0], [4.0]]))
        np.testing.assert_allclose(Q, [[0.6], [0.8]], atol=1e-15)
        np.testing.assert_allclose(R, [[5.0]], atol=1e-14)

    def test_random_reconstruction(self):
        M = np.random.default_rng(3).normal(size=(10, 4))
        Q, R = thin_qr(M)
        np.testing.assert_allclose(Q @ R, M, atol=1e-12 * np.linalg.norm(M))
        np.testing.assert_allclose(Q.T @ Q, np.eye(4), atol=1e-12)
        assert np.allclose(np.tril(R, -1), 0.0)
        assert np.all(np.diag(R) > 0)

    def test_rank_deficient_names_column(self):
        M = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 1.0], [0.0, 0.0, 1.0], [1.0, 2.0, 5.0]])
        with pytest.raises(RankDeficientError) as info:
            thin_qr(M)
        assert info.value.column == 1

    def test_rejects_wide_and_nonfinite(self):
        with pytest.raises(ValueError):
            thin_qr(np.ones((2, 3)))
        with pytest.raises(NonFiniteError):
            thin_qr(np.array([[np.nan], [1.0]]))


class TestLogAbsDet:
    def test_identity_and_diagonal(self):
        assert log_abs_det_qr(np.eye(4)) == 0.0
        assert abs(log_abs_det_qr(np.diag([2.0, 0.5]))) < 1e-15

    def test_against_cofactor_expansion(self):
        M = np.random.default_rng(11).normal(size=(5, 5))
        expected = np.log(abs(cofactor_det(M)))
        np.testing.assert_allclose(log_abs_det_qr(M), expected, rtol=1e-10)

    def test_singular(self):
        with pytest.raises(SingularMatrixError):
            log_abs_det_qr(np.array([[1.0, 2.0], [2.0, 4.0]]))


class TestSmallestSingularValue:
    @pytest.mark.parametrize(
        "M, expected",
        [
            (np.eye(3), 1.0),
            (np.diag([3.0, 2.0, 0.0]), 0.0),
            (np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), 1.0),
        ],
    )
    def test_examples(self, M, expected):
        assert smallest_singular_value(M) == pytest.approx(expected, abs=1e-15)


class TestRngStream:
    def test_replay(self):
        a = standard_normal(RngStream(7, 3), 100)
        b = standard_normal(RngStream(7, 3), 100)
        np.testing.assert_array_equal(a, b)

    def test_moments(self):
        x = standard_normal(RngStream(123, 0), 1_000_000)
        assert abs(x.mean()) < 0.01
        assert abs(x.var() - 1.0) < 0.01

    def test_streams_uncorrelated(self):
        a = standard_normal(RngStream(5, 1), 1_000_000)
        b = standard_normal(RngStream(5, 2), 1_000_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
