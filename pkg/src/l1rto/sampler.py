"""Randomize-then-optimize Metropolis-Hastings in the Gaussian reference space.

Posterior samples of ``theta`` are obtained by sampling ``u`` with
``theta = T(u)``, where ``T`` pushes a standard Gaussian to the prior. The
``u``-posterior is ``exp(-0.5 ||F(u)||^2)`` with the stacked residual
``F(u) = [u; W (f(T(u)) - y)]`` and ``W = Gamma_obs^{-1/2}``. Proposals solve
``min ||Qbar^T F(u) - xi||^2`` for Gaussian ``xi`` and are corrected by an
independence Metropolis step.
"""
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import AssumptionViolation, ConfigError, ConvergenceError, RankDeficientError, SingularMatrixError
from .lsq import LsqOptions, LsqProblem, LsqStatus, solve_lsq
from .numkit import RngStream, log_abs_det_qr, smallest_singular_value, standard_normal, thin_qr
from .transforms import approx_pullback_log_weight

PROPOSAL_GRADIENT_TOL = 1e-8
MODE_GRADIENT_TOL = 1e-8
MODE_STEP_TOL = 1e-15
AUDIT_TOL = 1e-10
ACCEPT_STREAM = 0


def whitening(gamma_obs, m):
    """Symmetric inverse square root of the noise covariance.

    Returns a vector when the covariance is diagonal (scalar variance,
    vector of variances or diagonal matrix), a dense matrix otherwise.
    """
    G = np.asarray(gamma_obs, dtype=float)
    if G.ndim == 0:
        G = np.full(m, float(G))
    if G.ndim == 2:
        if G.shape != (m, m) or not np.allclose(G, G.T, rtol=1e-12, atol=0.0):
            raise ConfigError("Gamma_obs must be a symmetric m x m matrix")
        if np.count_nonzero(G - np.diag(np.diag(G))) == 0:
            G = np.diag(G).copy()
        else:
            vals, vecs = np.linalg.eigh(G)
            if not np.all(vals > 0):
                raise ConfigError("Gamma_obs is not positive definite")
            return (vecs / np.sqrt(vals)) @ vecs.T
    if G.shape != (m,):
        raise ConfigError(f"Gamma_obs has shape {G.shape}, expected ({m},)")
    if not np.all(G > 0):
        raise ConfigError("Gamma_obs is not positive definite")
    return 1.0 / np.sqrt(G)


def _apply(W, M):
    if W.ndim == 1:
        return W[:, None] * M if M.ndim == 2 else W * M
    return W @ M


@dataclass
class RtoContext:
    model: object
    transform: object
    y: np.ndarray
    W: np.ndarray
    weights: str = "exact"
    mode: np.ndarray | None = None
    Qbar: np.ndarray | None = None
    mode_report: object = None
    lsq_options: LsqOptions = field(default_factory=LsqOptions)
    audit: bool = True
    _AD: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.yw = _apply(self.W, self.y)
        self.n = self.transform.n
        self.m = self.y.size
        if (
            getattr(self.model, "is_linear", False)
            and hasattr(self.transform, "right_solve")
            and hasattr(self.transform, "inner_forward")
        ):
            # f(T(u)) = A D^{-1} g(u): whitened A D^{-1} once, via the stored solve
            self._AD = self.transform.right_solve(_apply(self.W, self.model.jacobian(None)))

    # -- residual and Jacobian -------------------------------------------------
    def misfit(self, u):
        if self._AD is not None:
            return self._AD @ self.transform.inner_forward(u) - self.yw
        theta = self.transform.forward(u)
        return _apply(self.W, self.model.evaluate(theta)) - self.yw

    def misfit_jacobian(self, u):
        if self._AD is not None:
            return self._AD * self.transform.inner_derivative(u)[None, :]
        theta = self.transform.forward(u)
        Jf = _apply(self.W, np.asarray(self.model.jacobian(theta), dtype=float))
        if hasattr(self.transform, "right_solve") and hasattr(self.transform, "inner_derivative"):
            return self.transform.right_solve(Jf) * self.transform.inner_derivative(u)[None, :]
        return Jf @ self.transform.jacobian(u)

    def Ftilde(self, u):
        u = np.asarray(u, dtype=float)
        return np.concatenate([u, self.misfit(u)])

    def JFtilde(self, u):
        u = np.asarray(u, dtype=float)
        return np.vstack([np.eye(self.n), self.misfit_jacobian(u)])

    @property
    def ready(self):
        return self.mode is not None and self.Qbar is not None


def build_context(model, transform, y, gamma_obs, weights=None, lsq_options=None):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if getattr(model, "n", transform.n) != transform.n:
        raise ConfigError("model and transform dimensions disagree")
    if getattr(model, "m", y.size) != y.size:
        raise ConfigError(f"data has {y.size} entries, model produces {model.m}")
    if weights is None:
        weights = "exact" if getattr(transform, "exact", True) else "corrected"
    if weights not in ("exact", "corrected"):
        raise ConfigError(f"unknown weight mode {weights!r}")
    return RtoContext(
        model=model,
        transform=transform,
        y=y,
        W=whitening(gamma_obs, y.size),
        weights=weights,
        lsq_options=lsq_options or LsqOptions(),
    )


def find_mode(ctx, x0=None):
    """Posterior mode of ``u`` by least squares on ``F`` from ``u = 0``.

    The step-size stopping rule is tightened to rounding level, since the
    mode must meet the gradient tolerance.
    """
    x0 = np.zeros(ctx.n) if x0 is None else np.asarray(x0, dtype=float)
    opts = replace(ctx.lsq_options, step_tol=min(ctx.lsq_options.step_tol, MODE_STEP_TOL))
    report = solve_lsq(LsqProblem(ctx.Ftilde, ctx.JFtilde), x0, opts)
    if not report.gradient_norm <= MODE_GRADIENT_TOL:
        raise ConvergenceError(
            f"mode search ended {report.status.value} after {report.iterations} iterations "
            f"with gradient {report.gradient_norm:.3e} (residual {report.final_residual_norm:.3e})",
            report,
        )
    ctx.mode = report.solution
    ctx.mode_report = report
    return ctx.mode


def set_linearization_point(ctx, u_bar):
    """Use ``u_bar`` instead of the mode; costs one residual and one Jacobian."""
    from .lsq import LsqReport

    u_bar = np.asarray(u_bar, dtype=float)
    ctx.mode = u_bar
    ctx.mode_report = LsqReport(
        solution=u_bar, status=LsqStatus.CONVERGED, iterations=0, final_residual_norm=float("nan"),
        gradient_norm=float("nan"), n_residual_evals=1, n_jacobian_evals=1,
        residual=ctx.Ftilde(u_bar), jacobian=ctx.JFtilde(u_bar),
    )
    return u_bar


def compute_reference_basis(ctx):
    if ctx.mode is None:
        raise ConfigError("find the linearization point first")
    J = ctx.mode_report.jacobian
    try:
        ctx.Qbar, _ = thin_qr(J)
    except RankDeficientError as exc:
        raise AssumptionViolation(f"stacked Jacobian at the linearization point is rank deficient: {exc}") from exc
    return ctx.Qbar


def rto_log_weight(ctx, u):
    """Log importance weight ``-log|det Qbar^T J(u)| - 0.5 ||F(u)||^2 + 0.5 ||Qbar^T F(u)||^2``."""
    return _log_weight(ctx, u)[0]


def _log_weight(ctx, u, F=None, J=None):
    # returns (log_w, sv_projected, sv_full); singular values are NaN with ctx.audit off
    u = np.asarray(u, dtype=float)
    F = ctx.Ftilde(u) if F is None else F
    J = ctx.JFtilde(u) if J is None else J
    QtJ = ctx.Qbar.T @ J
    try:
        logdet = log_abs_det_qr(QtJ)
    except SingularMatrixError as exc:
        raise AssumptionViolation(f"Qbar^T J is singular at u: {exc}") from exc
    proj = ctx.Qbar.T @ F
    if ctx.weights == "corrected":
        misfit = F[ctx.n:]
        log_w = approx_pullback_log_weight(ctx.transform, u, misfit @ misfit, proj @ proj, logdet)
    else:
        # ||F||^2 - ||Qbar^T F||^2 as the squared norm of the orthogonal part; no cancellation
        perp = F - ctx.Qbar @ proj
        log_w = -logdet - 0.5 * (perp @ perp)
    if ctx.audit:
        return log_w, smallest_singular_value(QtJ), smallest_singular_value(J)
    return log_w, float("nan"), float("nan")


def rto_propose(ctx, xi):
    """Solve ``min ||Qbar^T F(u) - xi||^2`` from the linearization point.

    Returns ``(u_prop, report)``.
    """
    u, report, _, _ = _propose(ctx, xi)
    return u, report


def _propose(ctx, xi):
    # also returns F and J at the solution, taken from the solver's own evaluations
    if not ctx.ready:
        raise ConfigError("context needs a linearization point and basis")
    Qt = ctx.Qbar.T
    xi = np.asarray(xi, dtype=float)
    last = {}

    def residual(u):
        F = ctx.Ftilde(u)
        last["u"], last["F"] = u, F
        return Qt @ F - xi

    accepted = {}

    def jacobian(u):
        J = ctx.JFtilde(u)
        if last.get("u") is u:
            accepted["u"], accepted["F"], accepted["J"] = u, last["F"], J
        return Qt @ J

    report = solve_lsq(LsqProblem(residual, jacobian), ctx.mode, ctx.lsq_options)
    u = report.solution
    if accepted.get("u") is u:
        F, J = accepted["F"], accepted["J"]
    else:
        # no step was taken; the start point is the linearization point
        F, J = ctx.mode_report.residual, ctx.mode_report.jacobian
    return u, report, F, J


@dataclass
class Chain:
    states: np.ndarray
    log_weights: np.ndarray
    accepted: np.ndarray
    n_function_evals: int = 0
    n_jacobian_evals: int = 0
    seed: int = 0
    acceptance_rate: float = float("nan")
    n_failed: int = 0
    sv_projected: np.ndarray | None = None
    sv_full: np.ndarray | None = None
    source: np.ndarray | None = None

    def __post_init__(self):
        if not (len(self.states) == len(self.log_weights) == len(self.accepted)):
            raise ValueError("chain arrays must have equal length")
        if np.isnan(self.acceptance_rate) and len(self.accepted):
            self.acceptance_rate = float(np.mean(self.accepted))

    def __len__(self):
        return len(self.states)


@dataclass
class Proposals:
    states: np.ndarray
    log_weights: np.ndarray
    valid: np.ndarray
    nfev: np.ndarray
    njev: np.ndarray
    sv_projected: np.ndarray
    sv_full: np.ndarray


def _propose_range(ctx, seed, start, stop):
    k = stop - start
    out = Proposals(
        states=np.zeros((k, ctx.n)),
        log_weights=np.full(k, -np.inf),
        valid=np.zeros(k, dtype=bool),
        nfev=np.zeros(k, dtype=np.int64),
        njev=np.zeros(k, dtype=np.int64),
        sv_projected=np.full(k, np.nan),
        sv_full=np.full(k, np.nan),
    )
    for j, i in enumerate(range(start, stop)):
        # proposal i consumes stream i + 1; stream 0 drives the accept/reject draws
        xi = standard_normal(RngStream(seed, i + 1), ctx.n)
        u, rep, F, J = _propose(ctx, xi)
        out.states[j] = u
        out.nfev[j] = rep.n_residual_evals
        out.njev[j] = rep.n_jacobian_evals
        if not rep.gradient_norm <= PROPOSAL_GRADIENT_TOL:
            continue
        try:
            lw, svp, svf = _log_weight(ctx, u, F, J)
        except AssumptionViolation:
            continue
        if np.isfinite(lw):
            out.log_weights[j] = lw
            out.valid[j] = True
            out.sv_projected[j] = svp
            out.sv_full[j] = svf
    return out


_WORKER_CTX = None


def _worker(args):
    seed, start, stop = args
    return _propose_range(_WORKER_CTX, seed, start, stop)


def generate_proposals(ctx, n_samps, seed, parallelism=1):
    """All proposals, optionally spread over ``parallelism`` forked workers.

    Results do not depend on ``parallelism``: proposal ``i`` reads only its
    own random stream.
    """
    global _WORKER_CTX
    if parallelism <= 1 or n_samps < 2:
        return _propose_range(ctx, seed, 0, n_samps)
    bounds = np.linspace(0, n_samps, min(parallelism * 4, n_samps) + 1).astype(int)
    tasks = [(seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    _WORKER_CTX = ctx
    try:
        with multiprocessing.get_context("fork").Pool(parallelism) as pool:
            parts = pool.map(_worker, tasks)
    finally:
        _WORKER_CTX = None
    return Proposals(*(np.concatenate([getattr(p, f) for p in parts]) for f in Proposals.__dataclass_fields__))


def metropolize(proposals, log_weights, valid, stream, initial=None, initial_log_weight=-np.inf, uniforms=None):
    """Independence Metropolis-Hastings over precomputed proposals.

    Proposal ``i`` replaces the current state when ``v_i < w_i / w_current``.
    Invalid proposals are always rejected. Without ``initial`` the chain
    starts from the first valid proposal. ``chain.source[i]`` is the index
    of the proposal held at step ``i`` (-1 for the initial state).
    """
    proposals = np.asarray(proposals, dtype=float)
    log_weights = np.asarray(log_weights, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    N = len(log_weights)
    if not valid.any():
        raise ConvergenceError("every proposal failed; nothing to metropolize")
    if uniforms is None:
        uniforms = stream.generator().random(N)
    with np.errstate(divide="ignore"):
        log_v = np.log(np.asarray(uniforms, dtype=float))
    accepted, current = kernels.independence_mh(log_weights, valid, float(initial_log_weight), log_v)
    proposals = proposals.reshape(N, -1)
    if initial is None:
        initial = np.full(proposals.shape[1], np.nan)
    pool = np.vstack([proposals, np.atleast_2d(initial)])
    lw_pool = np.append(log_weights, initial_log_weight)
    # index -1 selects the appended initial state
    return Chain(
        states=pool[current],
        log_weights=lw_pool[current],
        accepted=accepted,
        seed=getattr(stream, "seed", 0),
        n_failed=int(N - valid.sum()),
        source=current,
    )


def prepare(model, transform, y, gamma_obs, weights=None, lsq_options=None, linearization_point=None):
    ctx = build_context(model, transform, y, gamma_obs, weights=weights, lsq_options=lsq_options)
    if linearization_point is None:
        find_mode(ctx)
    else:
        set_linearization_point(ctx, linearization_point)
    compute_reference_basis(ctx)
    return ctx


def run_rto_mh(model, transform, y, gamma_obs, n_samps, seed, parallelism=1, weights=None,
               lsq_options=None, linearization_point=None, ctx=None):
    """End-to-end sampler. Returns ``(chain, theta_samples)``; the chain holds
    reference-space states."""
    if ctx is None:
        ctx = prepare(model, transform, y, gamma_obs, weights, lsq_options, linearization_point)
    props = generate_proposals(ctx, int(n_samps), seed, parallelism)
    lw0, svp0, svf0 = _log_weight(ctx, ctx.mode, ctx.mode_report.residual, ctx.mode_report.jacobian)
    chain = metropolize(
        props.states, props.log_weights, props.valid, RngStream(seed, ACCEPT_STREAM), ctx.mode, lw0
    )
    current = chain.source
    chain.n_function_evals = int(ctx.mode_report.n_residual_evals + props.nfev.sum())
    chain.n_jacobian_evals = int(ctx.mode_report.n_jacobian_evals + props.njev.sum())
    chain.sv_projected = np.append(props.sv_projected, svp0)[current]
    chain.sv_full = np.append(props.sv_full, svf0)[current]
    chain.seed = seed
    theta = pushforward(ctx.transform, chain.states, current)
    return chain, theta


def pushforward(transform, states, source=None):
    """``theta = T(u)`` row by row, evaluating each distinct state once.

    ``source`` labels rows holding the same state (as in ``Chain.source``);
    without it, distinct rows are found by comparison.
    """
    states = np.asarray(states, dtype=float)
    if source is None:
        _, first, inv = np.unique(states, axis=0, return_index=True, return_inverse=True)
    else:
        _, first, inv = np.unique(np.asarray(source), return_index=True, return_inverse=True)
    mapped = np.stack([np.atleast_1d(transform.forward(states[i])) for i in first])
    return mapped[np.asarray(inv).ravel()]


@dataclass
class AssumptionReport:
    min_sv_full: float
    min_sv_projected: float
    n_states: int
    n_flagged: int
    tol: float = AUDIT_TOL

    @property
    def ok(self):
        return self.n_flagged == 0

    @property
    def fraction_ok(self):
        return 1.0 - self.n_flagged / max(self.n_states, 1)

    def as_dict(self):
        return {
            "min_sv_full": self.min_sv_full,
            "min_sv_projected": self.min_sv_projected,
            "n_states": self.n_states,
            "n_flagged": self.n_flagged,
            "fraction_ok": self.fraction_ok,
            "ok": self.ok,
            "tol": self.tol,
        }


def verify_assumptions(ctx, chain, tol=AUDIT_TOL):
    """Rank audit over the visited states of a chain.

    Checks that the stacked Jacobian has full column rank and that its
    projection onto the reference basis is invertible, via their smallest
    singular values. Uses values recorded during sampling when available and
    recomputes them (uncounted) otherwise.
    """
    svp = chain.sv_projected
    svf = chain.sv_full
    if svp is None or svf is None or np.any(np.isnan(svp)) or np.any(np.isnan(svf)):
        uniq, inv = np.unique(np.asarray(chain.states), axis=0, return_inverse=True)
        vals = []
        for u in uniq:
            J = ctx.JFtilde(u)
            vals.append((smallest_singular_value(ctx.Qbar.T @ J), smallest_singular_value(J)))
        vals = np.array(vals)
        inv = np.asarray(inv).ravel()
        svp, svf = vals[inv, 0], vals[inv, 1]
    flagged = (svp <= tol) | (svf <= tol)
    return AssumptionReport(
        min_sv_full=float(np.min(svf)),
        min_sv_projected=float(np.min(svp)),
        n_states=len(svp),
        n_flagged=int(flagged.sum()),
        tol=tol,
    )


class LinearL1Target:
    """``log p(theta) = -0.5 ||(A theta - y)/sigma||^2 - lam ||D theta||_1``.

    Callable as a log density; the random-walk baseline recognises it and
    runs the compiled kernel instead of a Python loop.
    """

    def __init__(self, A, y, sigma_obs, D, lam):
        self.Aw = np.ascontiguousarray(np.asarray(A, dtype=float) / sigma_obs)
        self.yw = np.ascontiguousarray(np.asarray(y, dtype=float) / sigma_obs)
        self.D = np.ascontiguousarray(D, dtype=float)
        self.lam = float(lam)

    def __call__(self, theta):
        r = self.Aw @ theta - self.yw
        return float(-0.5 * r @ r - self.lam * np.abs(self.D @ theta).sum())


RWM_BLOCK = 1 << 16


def rwm_baseline(log_density, x0, step_scale, n_samps, seed, thin=1):
    """Gaussian random-walk Metropolis with isotropic steps.

    Keeps every ``thin``-th state. ``n_function_evals`` counts target
    evaluations, including the one at ``x0``.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    lp = log_density(x)
    if not np.isfinite(lp):
        raise ValueError("log density is not finite at x0")
    if n_samps % thin:
        raise ValueError("n_samps must be a multiple of thin")
    gen = RngStream(seed, 0).generator()
    kept, kept_lp = [], []
    n_acc = 0
    block = max(thin, (RWM_BLOCK // thin) * thin)
    done = 0
    while done < n_samps:
        b = min(block, n_samps - done)
        z = gen.standard_normal((b, n))
        log_v = np.log(gen.random(b))
        if isinstance(log_density, LinearL1Target):
            t = log_density
            states, lps, acc = kernels.rwm_linear_l1(x, t.Aw, t.yw, t.D, t.lam, float(step_scale), z, log_v, thin)
        else:
            states = np.empty((b // thin, n))
            lps = np.empty(b // thin)
            acc = 0
            for i in range(b):
                xp = x + step_scale * z[i]
                lpp = log_density(xp)
                if log_v[i] < lpp - lp:
                    x, lp = xp, lpp
                    acc += 1
                if (i + 1) % thin == 0:
                    states[(i + 1) // thin - 1] = x
                    lps[(i + 1) // thin - 1] = lp
        kept.append(states)
        kept_lp.append(lps)
        n_acc += acc
        done += b
    states = np.vstack(kept)
    prev = np.vstack([np.asarray(x0, dtype=float)[None, :], states[:-1]])
    return Chain(
        states=states,
        log_weights=np.concatenate(kept_lp),
        accepted=np.any(states != prev, axis=1),
        n_function_evals=n_samps + 1,
        n_jacobian_evals=0,
        seed=seed,
        acceptance_rate=n_acc / n_samps,
    )
