"""Bilinear finite elements for ``-div(exp(theta) grad s) = h`` on the unit square.

Homogeneous Neumann conditions hold weakly; the constant nullspace is
removed by constraining the mean of ``s`` over boundary nodes to zero with
a Lagrange multiplier. The grid has ``side x side`` nodes, numbered
``k = i + side * j`` for node ``(i h, j h)`` with ``h = 1 / (side - 1)``;
``theta`` and ``s`` are nodal vectors in that order.
"""
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import special

from . import kernels
from .errors import ConfigError, L1RtoError
from .numkit import RngStream, standard_normal

BUMP_CENTERS_POS = (0.05, 0.5, 0.95)
BUMP_CENTERS_NEG = (0.25, 0.75)
BUMP_WEIGHT_POS = 1.0
BUMP_WEIGHT_NEG = -9.0 / 4.0
# standard deviation of each bump; at this width a 16x16 solution differs from
# the 128x128 data grid by less than 3e-3 for the default truth
BUMP_WIDTH = 0.15

_GP = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])


def _reference_element():
    """Shape values, reference gradients and weights at 2x2 Gauss points.

    Local node order: (0,0), (1,0), (0,1), (1,1).
    """
    pts = [(xi, eta) for eta in _GP for xi in _GP]
    Nq = np.array([[(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y] for x, y in pts])
    Gq = np.array(
        [
            [[-(1 - y), (1 - y), -y, y], [-(1 - x), -x, (1 - x), x]]
            for x, y in pts
        ]
    )
    wq = np.full(len(pts), 0.25)
    return Nq, Gq, wq


class Grid:
    def __init__(self, side):
        if side < 2:
            raise ConfigError("grid needs at least 2 nodes per side")
        self.side = int(side)
        self.h = 1.0 / (side - 1)
        self.n_nodes = side * side
        i, j = np.meshgrid(np.arange(side - 1), np.arange(side - 1), indexing="ij")
        k00 = (i + side * j).ravel(order="F")
        self.conn = np.stack([k00, k00 + 1, k00 + side, k00 + side + 1], axis=1).astype(np.int64)
        coords = np.arange(side) * self.h
        self.x = np.tile(coords, side)
        self.y = np.repeat(coords, side)
        on_edge = (np.isclose(self.x, 0) | np.isclose(self.x, 1) | np.isclose(self.y, 0) | np.isclose(self.y, 1))
        self.boundary = np.flatnonzero(on_edge)
        self.rows = np.repeat(self.conn[:, :, None], 4, axis=2).ravel()
        self.cols = np.repeat(self.conn[:, None, :], 4, axis=1).ravel()


def _hat_gaussian_1d(side, center, width):
    """``int phi_i(x) N(x; center, width^2) dx`` over [0, 1] for each 1-D hat."""
    nodes = np.linspace(0.0, 1.0, side)
    h = nodes[1] - nodes[0]
    l, r = nodes[:-1], nodes[1:]
    zl, zr = (l - center) / width, (r - center) / width
    mass = special.ndtr(zr) - special.ndtr(zl)
    pdf = lambda z: np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)  # noqa: E731
    # int x N dx = center * mass + width * (pdf(zl) - pdf(zr))
    first = center * mass + width * (pdf(zl) - pdf(zr))
    out = np.zeros(side)
    out[1:] += (first - l * mass) / h  # rising half of hat i on [x_{i-1}, x_i]
    out[:-1] += (r * mass - first) / h  # falling half of hat i on [x_i, x_{i+1}]
    return out


def lumped_mass(grid):
    w = np.full(grid.side, grid.h)
    w[[0, -1]] = 0.5 * grid.h
    return np.tile(w, grid.side) * np.repeat(w, grid.side)


def forcing_field(bump_width, side, compatible=True):
    """Nodal load of the thirteen-bump forcing.

    Nine bumps of weight 1 at ``{0.05, 0.5, 0.95}^2`` and four of weight
    ``-9/4`` at ``{0.25, 0.75}^2``; each bump is an isotropic Gaussian
    density of standard deviation ``bump_width``, integrated exactly against
    the bilinear hats. Bumps near the edge lose mass outside the square, so
    with ``compatible=True`` the mean of ``h`` over the square is removed to
    restore the Neumann solvability condition.
    """
    if not bump_width > 0:
        raise ConfigError("bump_width must be positive")
    grid = side if isinstance(side, Grid) else Grid(side)
    load = np.zeros(grid.n_nodes)
    bumps = [(a, b, BUMP_WEIGHT_POS) for a in BUMP_CENTERS_POS for b in BUMP_CENTERS_POS]
    bumps += [(a, b, BUMP_WEIGHT_NEG) for a in BUMP_CENTERS_NEG for b in BUMP_CENTERS_NEG]
    for a, b, w in bumps:
        gx = _hat_gaussian_1d(grid.side, a, bump_width)
        gy = _hat_gaussian_1d(grid.side, b, bump_width)
        load += w * np.tile(gx, grid.side) * np.repeat(gy, grid.side)
    if compatible:
        m = lumped_mass(grid)
        load -= load.sum() * m / m.sum()
    return load


def load_vector(func, side, order=4):
    """``int func(x, y) phi_k dx`` by tensor Gauss-Legendre quadrature per element."""
    grid = side if isinstance(side, Grid) else Grid(side)
    g, w = np.polynomial.legendre.leggauss(order)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(g, g, indexing="ij")
    wq = np.outer(w, w).ravel() * grid.h ** 2
    xi, eta = xi.ravel(), eta.ravel()
    N = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta], axis=1)
    x0 = grid.x[grid.conn[:, 0]]
    y0 = grid.y[grid.conn[:, 0]]
    fx = func(x0[:, None] + grid.h * xi[None, :], y0[:, None] + grid.h * eta[None, :])
    contrib = (fx * wq) @ N  # (E, 4)
    out = np.zeros(grid.n_nodes)
    np.add.at(out, grid.conn.ravel(), contrib.ravel())
    return out


def interpolation_matrix(src_side, dst_side):
    """Sparse bilinear interpolation from one nodal grid of the unit square to another.

    Rows sum to one.
    """
    hs = 1.0 / (src_side - 1)
    c = np.linspace(0.0, 1.0, dst_side)
    x = np.tile(c, dst_side)
    y = np.repeat(c, dst_side)
    ix = np.minimum((x / hs).astype(int), src_side - 2)
    iy = np.minimum((y / hs).astype(int), src_side - 2)
    tx = x / hs - ix
    ty = y / hs - iy
    k00 = ix + src_side * iy
    cols = np.stack([k00, k00 + 1, k00 + src_side, k00 + src_side + 1], axis=1)
    vals = np.stack([(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1)
    rows = np.repeat(np.arange(dst_side * dst_side), 4)
    P = sp.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(dst_side ** 2, src_side ** 2))
    P.eliminate_zeros()
    return P


class EllipticModel:
    """Potential at every grid node as a function of nodal log-conductivity."""

    is_linear = False

    def __init__(self, side, sigma_obs=1.0, bump_width=BUMP_WIDTH, load=None):
        self.grid = Grid(side)
        self.sigma_obs = float(sigma_obs)
        self.bump_width = float(bump_width)
        self.load = forcing_field(bump_width, self.grid) if load is None else np.asarray(load, dtype=float)
        self._Nq, self._Gq, self._wq = _reference_element()
        nb = self.grid.boundary.size
        self._c = np.zeros(self.grid.n_nodes)
        self._c[self.grid.boundary] = 1.0 / nb

    @property
    def n(self):
        return self.grid.n_nodes

    @property
    def m(self):
        return self.grid.n_nodes

    def stiffness(self, theta):
        theta = np.ascontiguousarray(theta, dtype=float)
        Ke = kernels.element_stiffness(theta, self.grid.conn, self._Nq, self._Gq, self._wq)
        nn = self.grid.n_nodes
        return sp.csr_matrix((Ke.ravel(), (self.grid.rows, self.grid.cols)), shape=(nn, nn))

    def _augmented(self, K):
        c = sp.csr_matrix(self._c[None, :])
        return sp.bmat([[K, c.T], [c, None]], format="csc")

    def _factor(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n,) or not np.all(np.isfinite(theta)):
            raise L1RtoError("theta must be a finite nodal vector of length %d" % self.n)
        K = self.stiffness(theta)
        try:
            lu = spla.splu(self._augmented(K))
        except RuntimeError as exc:
            raise L1RtoError(f"FEM factorization failed: {exc}; theta range [{theta.min():.3g}, {theta.max():.3g}]") from exc
        return K, lu

    def _solve(self, theta, load):
        K, lu = self._factor(theta)
        rhs = np.append(load, 0.0)
        sol = lu.solve(rhs)
        s = sol[: self.n]
        res = K @ s + self._c * sol[-1] - load
        scale = max(np.linalg.norm(load), np.finfo(float).tiny)
        if np.linalg.norm(res) > 1e-10 * scale and np.linalg.norm(load) > 0:
            raise L1RtoError(
                f"FEM solve residual {np.linalg.norm(res):.3e} exceeds tolerance; "
                f"theta range [{theta.min():.3g}, {theta.max():.3g}]"
            )
        return s, K, lu

    def solve(self, theta, load=None):
        return self._solve(theta, self.load if load is None else load)[0]

    def evaluate(self, theta):
        return self.solve(theta)

    def jacobian(self, theta):
        """``ds/dtheta = -K^{-1} (dK/dtheta) s`` with one factorization for all columns."""
        theta = np.ascontiguousarray(theta, dtype=float)
        s, K, lu = self._solve(theta, self.load)
        G = kernels.stiffness_sensitivity(theta, s, self.grid.conn, self._Nq, self._Gq, self._wq, self.n)
        rhs = np.vstack([G, np.zeros((1, self.n))])
        return -lu.solve(rhs)[: self.n]


def elliptic_solve(model, theta):
    return model.solve(theta)


def elliptic_jacobian(model, theta):
    return model.jacobian(theta)


def default_truth(side):
    """Blocky log-conductivity used when no truth file is given.

    A raised disk and a lowered rectangle on a zero background.
    """
    grid = Grid(side)
    x, y = grid.x, grid.y
    out = np.zeros(grid.n_nodes)
    out[(x - 0.3) ** 2 + (y - 0.68) ** 2 < 0.18 ** 2] = 1.0
    out[(x > 0.55) & (x < 0.85) & (y > 0.2) & (y < 0.5)] = -1.0
    return out


def synthesize_data(model, theta_true, seed, fine_side=128, stream_id=0):
    """Noisy potentials at the model's nodes, simulated on a finer grid.

    The truth is interpolated to ``fine_side x fine_side`` nodes, solved
    there and interpolated back, so the data are not produced by the same
    discretization used for inversion.
    """
    fine = EllipticModel(fine_side, model.sigma_obs, model.bump_width)
    up = interpolation_matrix(model.grid.side, fine_side)
    down = interpolation_matrix(fine_side, model.grid.side)
    s_fine = fine.solve(up @ np.asarray(theta_true, dtype=float))
    clean = down @ s_fine
    if model.sigma_obs == 0.0:
        return clean
    return clean + model.sigma_obs * standard_normal(RngStream(seed, stream_id), clean.size)
