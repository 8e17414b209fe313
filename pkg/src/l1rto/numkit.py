"""Dense linear algebra helpers and reproducible random streams."""
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError, RankDeficientError, SingularMatrixError

RANK_TOL = 1e-14


def _as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFiniteError("matrix has non-finite entries")
    return M


def thin_qr(M):
    """Householder thin QR with a non-negative diagonal of R.

    Returns ``(Q, R)`` with ``Q`` of shape (k, n) and ``R`` (n, n). Raises
    RankDeficientError naming the first column whose pivot falls below
    ``1e-14 * ||M||_F``.
    """
    M = _as_matrix(M)
    k, n = M.shape
    if k < n:
        raise ValueError(f"thin_qr needs rows >= cols, got {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    # LAPACK leaves the sign of each Householder pivot free; fix it
    signs = np.where(np.diag(R) < 0.0, -1.0, 1.0)
    Q = Q * signs
    R = R * signs[:, None]
    tol = RANK_TOL * np.linalg.norm(M)
    diag = np.diag(R)
    bad = np.flatnonzero(diag <= tol)
    if bad.size:
        i = int(bad[0])
        raise RankDeficientError(i, float(diag[i]), tol)
    return Q, R


def log_abs_det_qr(M):
    """log|det M| as the sum of log|R_ii| from a QR factorization."""
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"log_abs_det_qr needs a square matrix, got {M.shape}")
    R = np.linalg.qr(M, mode="r")
    d = np.abs(np.diag(R))
    tol = RANK_TOL * np.linalg.norm(M)
    if np.any(d <= tol):
        i = int(np.argmin(d))
        raise SingularMatrixError(f"matrix is singular: |R[{i},{i}]| = {d[i]:.3e}")
    return float(np.sum(np.log(d)))


def smallest_singular_value(M):
    M = _as_matrix(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False).min())


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream.

    Two streams with the same ``(seed, stream_id)`` replay the same draws;
    different ids are spawned children of one ``SeedSequence`` and hence
    statistically independent. Creating one is cheap, so each proposal in a
    sampler owns its own stream and the draws do not depend on execution
    order.
    """

    seed: int
    stream_id: int = 0

    def generator(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def standard_normal(stream, count):
    return stream.generator().standard_normal(int(count))
