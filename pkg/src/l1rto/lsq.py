"""Levenberg-Marquardt for ``min 0.5 ||r(x)||^2``."""
import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteError

MAX_DAMPING = 1e20
MIN_DAMPING = 1e-20
# relative size of cost changes treated as rounding noise
COST_NOISE = 1e-12


class LsqStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    STALLED = "stalled"


@dataclass(frozen=True)
class LsqProblem:
    residual: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LsqOptions:
    max_iterations: int = 400
    gradient_tol: float = 1e-10
    step_tol: float = 1e-10
    residual_tol: float = 1e-12
    initial_damping: float = 1e-3

    def __post_init__(self):
        for name in ("gradient_tol", "step_tol", "residual_tol", "initial_damping"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class LsqReport:
    solution: np.ndarray
    status: LsqStatus
    iterations: int
    final_residual_norm: float
    gradient_norm: float
    n_residual_evals: int
    n_jacobian_evals: int
    residual: np.ndarray
    jacobian: np.ndarray

    @property
    def converged(self):
        return self.status is LsqStatus.CONVERGED


def _damped_step(J, r, mu):
    # min ||J dx + r||^2 + mu ||dx||^2 through QR of [J; sqrt(mu) I]
    n = J.shape[1]
    A = np.vstack([J, np.sqrt(mu) * np.eye(n)])
    Q, R = np.linalg.qr(A)
    return -np.linalg.solve(R, Q[: J.shape[0]].T @ r)


def solve_lsq(problem, x0, opts=None):
    """Minimize ``0.5 ||r(x)||^2`` from ``x0``.

    Damping is divided by 10 after every accepted step and multiplied by 10
    after every rejected one. Each trial step counts as one iteration. The
    returned report carries the residual and Jacobian at the solution, so
    callers can reuse them without another evaluation.
    """
    opts = opts or LsqOptions()
    x = np.array(x0, dtype=float)
    r = np.asarray(problem.residual(x), dtype=float)
    nfev, njev = 1, 0
    if not np.all(np.isfinite(r)):
        raise NonFiniteError("residual is not finite at the starting point")
    J = np.asarray(problem.jacobian(x), dtype=float)
    njev += 1
    cost = r @ r
    mu = opts.initial_damping
    status = LsqStatus.MAX_ITER
    it = 0
    g = J.T @ r
    while True:
        gnorm = np.max(np.abs(g)) if g.size else 0.0
        if gnorm <= opts.gradient_tol or np.sqrt(cost) <= opts.residual_tol:
            status = LsqStatus.CONVERGED
            break
        if it >= opts.max_iterations:
            break
        it += 1
        dx = _damped_step(J, r, mu)
        xt = x + dx
        rt = np.asarray(problem.residual(xt), dtype=float)
        nfev += 1
        ct = rt @ rt
        # cost change as sum((rt - r)(rt + r)) keeps precision near the optimum
        delta = (rt - r) @ (rt + r) if np.isfinite(ct) else np.inf
        accept = delta < 0.0
        Jt = None
        if not accept and abs(delta) <= COST_NOISE * cost:
            # the cost cannot resolve this step; judge it by the gradient instead
            Jt = np.asarray(problem.jacobian(xt), dtype=float)
            njev += 1
            accept = np.max(np.abs(Jt.T @ rt)) < np.max(np.abs(g))
        if accept:
            x, r, cost = xt, rt, ct
            J = Jt if Jt is not None else np.asarray(problem.jacobian(x), dtype=float)
            if Jt is None:
                njev += 1
            g = J.T @ r
            mu = max(mu / 10.0, MIN_DAMPING)
            if np.linalg.norm(dx) <= opts.step_tol * (1.0 + np.linalg.norm(x)):
                status = LsqStatus.CONVERGED
                break
        else:
            if np.linalg.norm(dx) <= opts.step_tol * (1.0 + np.linalg.norm(x)):
                # no representable decrease remains along a negligible step
                status = LsqStatus.CONVERGED
                break
            mu *= 10.0
            if mu > MAX_DAMPING:
                status = LsqStatus.STALLED
                break
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return LsqReport(
        solution=x,
        status=status,
        iterations=it,
        final_residual_norm=float(np.sqrt(cost)),
        gradient_norm=gnorm,
        n_residual_evals=nfev,
        n_jacobian_evals=njev,
        residual=r,
        jacobian=J,
    )
