"""Couplings between a standard Gaussian reference and l1-type priors.

The scalar map sends ``u ~ N(0, 1)`` to a Laplace variable with rate
``lam`` by composing the Gaussian cdf with the Laplace quantile function.
Multivariate l1 priors ``exp(-lam * ||D theta||_1)`` are reached through
``theta = D^{-1} g(u)`` with ``g`` applied componentwise.
"""
import abc
import math

import numpy as np
import scipy.linalg
from scipy import special

from .errors import NonFiniteError
from .numkit import log_abs_det_qr, smallest_singular_value

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_LOG2 = math.log(2.0)
_TAIL_SWITCH = 8.0
_NEAR_ZERO = 0.5
_INV_SWITCH = 1.0


def _out(x):
    return x[()] if x.ndim == 0 else x


def _log_two_sf(a):
    """log(2 * Phi(-a)) for a >= 0 without cancellation."""
    z = a / _SQRT2
    out = np.empty_like(z)
    near = a <= _NEAR_ZERO
    tail = a > _TAIL_SWITCH
    mid = ~(near | tail)
    out[near] = np.log1p(-special.erf(z[near]))
    out[mid] = np.log(special.erfc(z[mid]))
    zt = z[tail]
    out[tail] = np.log(special.erfcx(zt)) - zt * zt
    return out


def g1d_forward(u, lam):
    """Gaussian-to-Laplace map: ``-sign(u) log(1 - 2|Phi(u) - 1/2|) / lam``."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    return _out(-np.sign(u) * _log_two_sf(np.atleast_1d(a)).reshape(a.shape) / lam)


def g1d_derivative(u, lam):
    """Derivative of :func:`g1d_forward`.

    Uses the Mills-ratio form ``sqrt(2/pi) / (lam * erfcx(|u|/sqrt 2))``,
    which equals ``phi(u) / (lam * Phi(-|u|))`` and stays finite far into
    the tails.
    """
    u = np.asarray(u, dtype=float)
    return _out(_SQRT_2_OVER_PI / (lam * special.erfcx(np.abs(u) / _SQRT2)))


def g1d_inverse(theta, lam):
    """Inverse of :func:`g1d_forward` via the Gaussian quantile."""
    theta = np.asarray(theta, dtype=float)
    x = np.atleast_1d(lam * np.abs(theta))
    out = np.empty_like(x)
    near = x <= _INV_SWITCH
    # 2 L(theta) - 1 = 1 - exp(-x) for theta > 0
    out[near] = _SQRT2 * special.erfinv(-np.expm1(-x[near]))
    out[~near] = -special.ndtri_exp(-x[~near] - _LOG2)
    return _out(np.sign(theta) * out.reshape(theta.shape))


def laplace_cdf(theta, lam):
    theta = np.asarray(theta, dtype=float)
    half = 0.5 * np.exp(-lam * np.abs(theta))
    return _out(np.where(theta < 0, half, 1.0 - half))


class LaplaceScalarMap:
    def __init__(self, lam):
        if not lam > 0:
            raise ValueError("lam must be positive")
        self.lam = float(lam)

    def forward(self, u):
        return g1d_forward(u, self.lam)

    def derivative(self, u):
        return g1d_derivative(u, self.lam)

    def inverse(self, theta):
        return g1d_inverse(theta, self.lam)


class ApproximateTransform(abc.ABC):
    """Invertible map ``u -> theta`` whose reference law need not be exactly
    standard Gaussian.

    Sampling with such a map requires the prior density on ``theta`` and the
    log Jacobian determinant of the map, which enter the corrected weights.
    """

    n: int
    # True when the reference law maps exactly to the prior
    exact = True

    @abc.abstractmethod
    def forward(self, u): ...

    @abc.abstractmethod
    def inverse(self, theta): ...

    @abc.abstractmethod
    def jacobian(self, u): ...

    @abc.abstractmethod
    def log_abs_det_jacobian(self, u): ...

    @abc.abstractmethod
    def prior_log_density(self, theta): ...


class IdentityTransform(ApproximateTransform):
    """``theta = u``; the prior on theta is standard Gaussian."""

    def __init__(self, n):
        self.n = int(n)

    def forward(self, u):
        return np.array(u, dtype=float)

    def inverse(self, theta):
        return np.array(theta, dtype=float)

    def jacobian(self, u):
        return np.eye(self.n)

    def log_abs_det_jacobian(self, u):
        return 0.0

    def prior_log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        return float(-0.5 * theta @ theta - 0.5 * self.n * math.log(2 * math.pi))

    # linear-structure hooks used by the sampler's fast path
    def right_solve(self, M):
        return np.array(M, dtype=float)

    def inner_forward(self, u):
        return np.asarray(u, dtype=float)

    def inner_derivative(self, u):
        return np.ones(self.n)


class L1PriorTransform(ApproximateTransform):
    """Exact coupling ``theta = D^{-1} g(u)`` for ``p(theta) ~ exp(-lam ||D theta||_1)``."""

    def __init__(self, D, lam):
        D = np.array(D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("D must be square")
        if not lam > 0:
            raise ValueError("lam must be positive")
        if smallest_singular_value(D) <= 1e-14 * np.linalg.norm(D):
            raise ValueError("D must be invertible")
        self.D = D
        self.D.setflags(write=False)
        self.lam = float(lam)
        self.n = D.shape[0]
        self._lu = scipy.linalg.lu_factor(D, check_finite=False)
        self._log_abs_det_D = None

    def inner_forward(self, u):
        return np.atleast_1d(g1d_forward(u, self.lam))

    def inner_derivative(self, u):
        return np.atleast_1d(g1d_derivative(u, self.lam))

    def solve(self, rhs):
        return scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)

    def right_solve(self, M):
        """``M @ D^{-1}`` through the stored factorization."""
        M = np.asarray(M, dtype=float)
        if M.shape[0] == 0:
            return np.zeros_like(M)
        return scipy.linalg.lu_solve(self._lu, M.T, trans=1, check_finite=False).T

    def forward(self, u):
        u = np.asarray(u, dtype=float)
        return self.solve(self.inner_forward(u))

    def jacobian(self, u):
        return self.solve(np.diag(self.inner_derivative(u)))

    def inverse(self, theta):
        return np.atleast_1d(g1d_inverse(self.D @ np.asarray(theta, dtype=float), self.lam))

    @property
    def log_abs_det_D(self):
        if self._log_abs_det_D is None:
            self._log_abs_det_D = log_abs_det_qr(self.D)
        return self._log_abs_det_D

    def log_abs_det_jacobian(self, u):
        return float(np.sum(np.log(self.inner_derivative(u))) - self.log_abs_det_D)

    def prior_log_density(self, theta):
        """Unnormalized log prior ``-lam ||D theta||_1``."""
        return float(-self.lam * np.abs(self.D @ theta).sum())


def l1_map_forward(T, u):
    return T.forward(u)


def l1_map_jacobian(T, u):
    return T.jacobian(u)


def l1_map_inverse(T, theta):
    return T.inverse(theta)


class ScaledReferenceMap(ApproximateTransform):
    """``T_hat(u) = T(c u)`` for an exact map ``T``.

    With ``c != 1`` the reference law is ``N(0, 1/c^2)`` instead of standard
    normal, so only the corrected weights give the right posterior. Used to
    exercise the correction.
    """

    exact = False

    def __init__(self, base, scale):
        self.base = base
        self.scale = float(scale)
        self.n = base.n

    def forward(self, u):
        return self.base.forward(self.scale * np.asarray(u, dtype=float))

    def inverse(self, theta):
        return self.base.inverse(theta) / self.scale

    def jacobian(self, u):
        return self.scale * self.base.jacobian(self.scale * np.asarray(u, dtype=float))

    def log_abs_det_jacobian(self, u):
        u = np.asarray(u, dtype=float)
        return self.n * math.log(abs(self.scale)) + self.base.log_abs_det_jacobian(self.scale * u)

    def prior_log_density(self, theta):
        return self.base.prior_log_density(theta)


def approx_pullback_log_weight(transform, u, residual_norm_sq, projected_norm_sq, logdet_QtJF):
    """Log RTO weight for a possibly inexact prior map.

    ``residual_norm_sq`` is the whitened data misfit ``||f_hat(u) - y~||^2``
    only (no reference block); the prior enters through the pullback of
    ``p_theta`` under the map.
    """
    u = np.asarray(u, dtype=float)
    log_prior = transform.prior_log_density(transform.forward(u))
    log_jac = transform.log_abs_det_jacobian(u)
    if not (np.isfinite(log_prior) and np.isfinite(log_jac)):
        raise NonFiniteError("prior density or Jacobian determinant is not finite")
    return float(-logdet_QtJF - 0.5 * residual_norm_sq + 0.5 * projected_norm_sq + log_jac + log_prior)
