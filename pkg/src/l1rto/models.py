"""Linear forward models, truth signals and synthetic data."""
import numpy as np

from .errors import ConfigError
from .numkit import RngStream, standard_normal

KERNEL_HALF_WIDTH = 1.0 / 64.0


class LinearModel:
    """``f(theta) = A theta``."""

    is_linear = True

    def __init__(self, A, sigma_obs=1.0):
        self.A = np.array(A, dtype=float, ndmin=2)
        self.A.setflags(write=False)
        self.sigma_obs = float(sigma_obs)

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.A.shape[0]

    def evaluate(self, theta):
        return self.A @ theta

    def jacobian(self, theta=None):
        return self.A


def midpoint_grid(n):
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def measurement_centers(m):
    return np.arange(1, m + 1) / (m + 1.0)


class ConvolutionModel(LinearModel):
    """Box-kernel blur of a signal on the midpoint grid of [0, 1].

    Row ``k`` integrates the signal over ``(t_k - 1/64, t_k + 1/64)`` with the
    midpoint rule, ``A[k, i] = 1/n`` when node ``x_i`` lies inside.
    """

    def __init__(self, n, m, sigma_obs=1.0):
        if n < 2 or m < 1:
            raise ConfigError("convolution model needs n >= 2 and m >= 1")
        self.x = midpoint_grid(n)
        self.t = measurement_centers(m)
        inside = np.abs(self.x[None, :] - self.t[:, None]) < KERNEL_HALF_WIDTH
        super().__init__(inside / n, sigma_obs)


def build_convolution(n, m, sigma_obs=1.0):
    return ConvolutionModel(n, m, sigma_obs)


# piecewise-constant truths as (left, right, level) intervals
TRUTH_PIECES = {
    "square_pulse": ((1 / 3, 2 / 3, 1.0),),
    "two_level": ((2 / 15, 7 / 15, 1.0), (10 / 15, 13 / 15, 0.5)),
}


def make_truth(kind, n, path=None):
    """Nodal truth on the midpoint grid.

    ``square_pulse``: 1 on (1/3, 2/3). ``two_level``: 1 on (2/15, 7/15) and
    1/2 on (10/15, 13/15). ``file``: a one-column CSV with header.
    """
    x = midpoint_grid(n)
    if kind in TRUTH_PIECES:
        out = np.zeros(n)
        for a, b, level in TRUTH_PIECES[kind]:
            out[(x > a) & (x < b)] = level
        return out
    if kind == "file":
        values = read_vector_csv(path)
        if values.size != n:
            raise ConfigError(f"truth file {path} has {values.size} values, expected {n}")
        return values
    raise ConfigError(f"unknown truth kind {kind!r}")


def generate_data(model, theta_true, seed, stream_id=0):
    """``y = f(theta_true) + sigma_obs * zeta`` with ``zeta`` from a seeded stream."""
    clean = np.asarray(model.evaluate(np.asarray(theta_true, dtype=float)), dtype=float)
    if model.sigma_obs == 0.0:
        return clean.copy()
    return clean + model.sigma_obs * standard_normal(RngStream(seed, stream_id), clean.size)


def continuum_measurements(kind, m):
    """Exact box-kernel integrals of a piecewise-constant truth at the ``m`` centers.

    These do not depend on any signal grid, so one data vector can serve
    every discretization ``n``.
    """
    if kind not in TRUTH_PIECES:
        raise ConfigError(f"no closed-form truth for {kind!r}")
    t = measurement_centers(m)
    lo, hi = t - KERNEL_HALF_WIDTH, t + KERNEL_HALF_WIDTH
    out = np.zeros(m)
    for a, b, level in TRUTH_PIECES[kind]:
        out += level * np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
    return out


def generate_continuum_data(kind, m, sigma_obs, seed, stream_id=0):
    """Like :func:`generate_data` but starting from :func:`continuum_measurements`."""
    clean = continuum_measurements(kind, m)
    if sigma_obs == 0.0:
        return clean
    return clean + sigma_obs * standard_normal(RngStream(seed, stream_id), m)


def write_vector_csv(path, values, name):
    values = np.asarray(values, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.write(name + "\n")
        for v in values:
            fh.write(repr(float(v)) + "\n")


def read_vector_csv(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1).ravel()
