"""Total-variation and Haar-Besov operators for l1-type priors."""
import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .numkit import RngStream, standard_normal
from .transforms import L1PriorTransform


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def build_tv_operator(n):
    """Difference operator with a wrap-around first row.

    Row 0 is ``e_0 + e_{n-1}`` (sum of the boundary values), rows ``i >= 1``
    are ``e_i - e_{i-1}``. The first row is what makes ``D`` invertible.
    """
    if n < 2:
        raise ConfigError("TV operator needs n >= 2")
    D = np.eye(n) - np.eye(n, k=-1)
    D[0, n - 1] = 1.0
    return D


def haar_basis(n):
    """Rows ``[phi_00, psi_00, psi_10, psi_11, psi_20, ...]`` sampled at the
    midpoints ``(2i+1)/(2n)``, each scaled by ``1/sqrt(n)`` so the result is
    orthogonal."""
    if not _is_pow2(n):
        raise ConfigError(f"Haar basis needs n a power of 2, got {n}")
    x = (2.0 * np.arange(n) + 1.0) / (2.0 * n)
    rows = [np.ones(n)]
    levels = n.bit_length() - 1
    for j in range(levels):
        for k in range(2 ** j):
            t = 2.0 ** j * x - k
            psi = np.where((t > 0) & (t < 0.5), 1.0, 0.0) - np.where((t > 0.5) & (t < 1.0), 1.0, 0.0)
            rows.append(2.0 ** (j / 2.0) * psi)
    return np.array(rows) / math.sqrt(n)


def besov_weights(n, s):
    """Diagonal of ``W``: ``1/sqrt(n)`` for the mean and
    ``2^{j(s-1/2)}/sqrt(n)`` for the level-``j`` wavelets."""
    w = np.empty(n)
    w[0] = 1.0
    levels = n.bit_length() - 1
    for j in range(levels):
        w[2 ** j : 2 ** (j + 1)] = 2.0 ** (j * (s - 0.5))
    return w / math.sqrt(n)


def build_besov_1d(n, s):
    """``D = W B`` so that ``||D theta||_1`` is the discrete B^s_{1,1} norm."""
    if not _is_pow2(n) or n < 2:
        raise ConfigError(f"Besov operator needs n a power of 2, got {n}")
    return besov_weights(n, s)[:, None] * haar_basis(n)


def build_besov_2d(n, s):
    """Tensorized Haar-Besov operator on a ``sqrt(n) x sqrt(n)`` grid.

    Grid values are vectorized column-major (first grid index fastest), so
    ``D @ vec(X) == vec(D1 @ X @ D1.T)``.
    """
    side = math.isqrt(n)
    if side * side != n or not _is_pow2(side) or side < 2:
        raise ConfigError(f"2-D Besov operator needs n = (2^l)^2, got {n}")
    D1 = build_besov_1d(side, s)
    return np.kron(D1, D1)


def l1_log_prior(prior, theta):
    return float(-prior.lam * np.abs(prior.D @ np.asarray(theta, dtype=float)).sum())


def besov_pointwise_variance(s, levels=None):
    """Pointwise variance of a Haar-Besov B^s_{1,1} field with unit rate.

    ``levels=None`` gives the infinite-depth geometric series, which only
    converges for ``s > 1``.
    """
    if levels is None:
        if s <= 1:
            raise ValueError("pointwise variance diverges for s <= 1 at infinite depth")
        q = 2.0 ** (-2.0 * (s - 1.0))
        # 2 (1 + 1/(1-q)) over a common denominator; exact inputs give a correctly rounded result
        return (4.0 - 2.0 * q) / (1.0 - q)
    j = np.arange(int(levels) + 1)
    return float(2.0 * (1.0 + np.sum(2.0 ** (-2.0 * j * (s - 1.0)))))


@dataclass
class L1Prior:
    D: np.ndarray
    lam: float
    kind: str = "custom"
    s: float | None = None
    _transform: L1PriorTransform | None = field(default=None, repr=False)

    def __post_init__(self):
        self.D = np.array(self.D, dtype=float)
        self.D.setflags(write=False)
        if not self.lam > 0:
            raise ConfigError("lam must be positive")

    @property
    def n(self):
        return self.D.shape[0]

    def log_density(self, theta):
        return l1_log_prior(self, theta)

    def transform(self):
        if self._transform is None:
            self._transform = L1PriorTransform(self.D, self.lam)
        return self._transform

    def sample(self, count, seed, stream_id=0):
        """``count`` prior draws as rows, via ``theta = D^{-1} g(u)``."""
        u = standard_normal(RngStream(seed, stream_id), count * self.n).reshape(count, self.n)
        T = self.transform()
        return T.solve(T.inner_forward(u.ravel()).reshape(count, self.n).T).T

    @classmethod
    def tv(cls, n, lam):
        return cls(build_tv_operator(n), lam, kind="tv1d")

    @classmethod
    def besov1d(cls, n, lam, s):
        return cls(build_besov_1d(n, s), lam, kind="besov1d", s=s)

    @classmethod
    def besov2d(cls, n, lam, s):
        return cls(build_besov_2d(n, s), lam, kind="besov2d", s=s)


def write_operator_csv(path, D):
    D = np.asarray(D, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"c{j}" for j in range(D.shape[1])])
        for row in D:
            w.writerow([repr(float(v)) for v in row])


def read_operator_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
