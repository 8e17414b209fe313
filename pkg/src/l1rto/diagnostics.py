"""Effective sample size, chain moments and a Kolmogorov-Smirnov distance."""
from dataclasses import dataclass

import numpy as np

from . import kernels

WINDOW_CONSTANT = 6.0


class ConstantSeriesError(ValueError):
    """Autocorrelation is undefined for a series without variance."""


def autocorrelation(series, max_lag):
    x = np.asarray(series, dtype=float)
    x = np.ascontiguousarray(x - x.mean())
    c = kernels.autocovariance(x, int(max_lag))
    return c / c[0]


def ess_iact(series, c=WINDOW_CONSTANT, min_length=100):
    """``(ess, iact)`` with an automatically windowed autocorrelation sum.

    ``iact(W) = 1 + 2 sum_{t=1}^{W} rho(t)``; the window is the smallest
    ``W`` with ``W >= c * iact(W)``. Estimates below one are clamped to one
    so that ``ess <= N``.
    """
    x = np.asarray(series, dtype=float).ravel()
    N = x.size
    if N < min_length:
        raise ValueError(f"series has {N} values, need at least {min_length}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    xc = x - x.mean()
    if not np.any(xc != 0.0) or xc @ xc == 0.0:
        raise ConstantSeriesError("series is constant")
    max_lag = min(N - 1, 256)
    while True:
        rho = autocorrelation(x, max_lag)
        tau = 1.0 + 2.0 * np.cumsum(rho[1:])
        W = np.arange(1, max_lag + 1)
        ok = np.flatnonzero(W >= c * tau)
        if ok.size:
            iact = tau[ok[0]]
            break
        if max_lag >= N - 1:
            iact = tau[-1]
            break
        max_lag = min(N - 1, 4 * max_lag)
    iact = max(float(iact), 1.0)
    return N / iact, iact


@dataclass
class EssReport:
    ess: np.ndarray
    iact: np.ndarray

    @property
    def min(self):
        return float(np.nanmin(self.ess))

    @property
    def median(self):
        return float(np.nanmedian(self.ess))

    @property
    def max(self):
        return float(np.nanmax(self.ess))

    def as_dict(self):
        return {"min": self.min, "median": self.median, "max": self.max}


def ess_report(samples, c=WINDOW_CONSTANT):
    """Per-component ESS; constant components get NaN and are skipped by the summaries."""
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    ess = np.full(X.shape[1], np.nan)
    iact = np.full(X.shape[1], np.nan)
    for k in range(X.shape[1]):
        try:
            ess[k], iact[k] = ess_iact(X[:, k], c=c)
        except ConstantSeriesError:
            pass
    return EssReport(ess=ess, iact=iact)


@dataclass
class ChainSummary:
    mean: np.ndarray
    std: np.ndarray
    covariance: np.ndarray
    ess: EssReport | None


def chain_summary(samples, with_ess=True, c=WINDOW_CONSTANT):
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    cov = 0.5 * (cov + cov.T)
    std = np.sqrt(np.maximum(np.diag(cov), 0.0))
    ess = ess_report(X, c) if with_ess and X.shape[0] >= 100 else None
    return ChainSummary(mean=mean, std=std, covariance=cov, ess=ess)


def ks_statistic(samples, cdf):
    """``sup_x |F_N(x) - cdf(x)|`` over the sample points, both one-sided gaps."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    N = x.size
    if N < 10:
        raise ValueError("need at least 10 samples")
    F = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, N + 1) / N - F
    lower = F - np.arange(0, N) / N
    return float(max(upper.max(), lower.max()))
