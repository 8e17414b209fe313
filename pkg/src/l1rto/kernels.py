"""Hot inner loops, each in a numba and a numpy flavour.

The public names at the bottom dispatch on ``_jit.USE_NUMBA``. Both
flavours are kept importable (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them directly.
"""
import numpy as np

from . import _jit
from ._jit import njit


# -- autocovariance -----------------------------------------------------------

def autocovariance_numpy(x, max_lag):
    """``C[t] = sum_i x_i x_{i+t} / (N - t)`` for ``t = 0..max_lag``; ``x`` centered."""
    N = x.shape[0]
    max_lag = min(max_lag, N - 1)
    out = np.empty(max_lag + 1)
    for t in range(max_lag + 1):
        out[t] = np.dot(x[: N - t], x[t:]) / (N - t)
    return out


@njit
def autocovariance_numba(x, max_lag):
    N = x.shape[0]
    if max_lag > N - 1:
        max_lag = N - 1
    out = np.empty(max_lag + 1)
    for t in range(max_lag + 1):
        # contiguous slices go through BLAS; a scalar loop would not vectorize
        out[t] = np.dot(x[: N - t], x[t:]) / (N - t)
    return out


# -- independence Metropolis-Hastings ----------------------------------------

def independence_mh_numpy(log_w, valid, log_w0, log_v):
    n = log_w.shape[0]
    accepted = np.zeros(n, dtype=np.bool_)
    current = np.empty(n, dtype=np.int64)
    cur_lw = log_w0
    cur = -1
    for i in range(n):
        if valid[i] and log_v[i] < log_w[i] - cur_lw:
            cur = i
            cur_lw = log_w[i]
            accepted[i] = True
        current[i] = cur
    return accepted, current


@njit
def independence_mh_numba(log_w, valid, log_w0, log_v):
    n = log_w.shape[0]
    accepted = np.zeros(n, dtype=np.bool_)
    current = np.empty(n, dtype=np.int64)
    cur_lw = log_w0
    cur = -1
    for i in range(n):
        if valid[i] and log_v[i] < log_w[i] - cur_lw:
            cur = i
            cur_lw = log_w[i]
            accepted[i] = True
        current[i] = cur
    return accepted, current


# -- random-walk Metropolis on a linear-Gaussian / l1 target --------------------

def rwm_linear_l1_numpy(theta, Aw, yw, D, lam, step, z, log_v, thin):
    """Advance a random-walk chain over one block of pre-drawn randomness.

    Target: ``-0.5 ||Aw theta - yw||^2 - lam ||D theta||_1``. ``theta`` is
    updated in place. Returns ``(kept_states, kept_logp, n_accepted)``.
    """
    steps, n = z.shape
    r = Aw @ theta - yw
    d = D @ theta
    logp = -0.5 * (r @ r) - lam * np.abs(d).sum()
    kept = np.empty((steps // thin, n))
    kept_lp = np.empty(steps // thin)
    n_acc = 0
    for i in range(steps):
        delta = step * z[i]
        r_new = r + Aw @ delta
        d_new = d + D @ delta
        lp_new = -0.5 * (r_new @ r_new) - lam * np.abs(d_new).sum()
        if log_v[i] < lp_new - logp:
            theta += delta
            r, d, logp = r_new, d_new, lp_new
            n_acc += 1
        if (i + 1) % thin == 0:
            kept[(i + 1) // thin - 1] = theta
            kept_lp[(i + 1) // thin - 1] = logp
    return kept, kept_lp, n_acc


@njit
def rwm_linear_l1_numba(theta, Aw, yw, D, lam, step, z, log_v, thin):
    steps, n = z.shape
    m = Aw.shape[0]
    r = Aw @ theta - yw
    d = D @ theta
    logp = -0.5 * np.dot(r, r) - lam * np.abs(d).sum()
    kept = np.empty((steps // thin, n))
    kept_lp = np.empty(steps // thin)
    r_new = np.empty(m)
    d_new = np.empty(n)
    delta = np.empty(n)
    n_acc = 0
    for i in range(steps):
        for j in range(n):
            delta[j] = step * z[i, j]
        ss = 0.0
        for k in range(m):
            acc = r[k]
            for j in range(n):
                acc += Aw[k, j] * delta[j]
            r_new[k] = acc
            ss += acc * acc
        l1 = 0.0
        for k in range(n):
            acc = d[k]
            for j in range(n):
                acc += D[k, j] * delta[j]
            d_new[k] = acc
            l1 += abs(acc)
        lp_new = -0.5 * ss - lam * l1
        if log_v[i] < lp_new - logp:
            for j in range(n):
                theta[j] += delta[j]
            r[:] = r_new
            d[:] = d_new
            logp = lp_new
            n_acc += 1
        if (i + 1) % thin == 0:
            kept[(i + 1) // thin - 1, :] = theta
            kept_lp[(i + 1) // thin - 1] = logp
    return kept, kept_lp, n_acc


# -- bilinear finite elements -------------------------------------------------

def element_stiffness_numpy(theta, conn, Nq, Gq, wq):
    """Element matrices ``K_e = sum_q w_q exp(theta(x_q)) G_q^T G_q``, shape (E, 4, 4)."""
    kappa = np.exp(theta[conn] @ Nq.T)  # (E, Q)
    GtG = np.einsum("qdi,qdj->qij", Gq, Gq)
    return np.einsum("eq,q,qij->eij", kappa, wq, GtG)


@njit
def element_stiffness_numba(theta, conn, Nq, Gq, wq):
    E = conn.shape[0]
    Q = Nq.shape[0]
    out = np.zeros((E, 4, 4))
    for e in range(E):
        for q in range(Q):
            t = 0.0
            for a in range(4):
                t += Nq[q, a] * theta[conn[e, a]]
            c = wq[q] * np.exp(t)
            for i in range(4):
                for j in range(4):
                    out[e, i, j] += c * (Gq[q, 0, i] * Gq[q, 0, j] + Gq[q, 1, i] * Gq[q, 1, j])
    return out


def stiffness_sensitivity_numpy(theta, s, conn, Nq, Gq, wq, n_nodes):
    """Dense ``G`` with column ``a`` equal to ``(dK/dtheta_a) s``."""
    kappa = np.exp(theta[conn] @ Nq.T)  # (E, Q)
    grad = np.einsum("qdj,ej->eqd", Gq, s[conn])  # (E, Q, 2)
    flux = np.einsum("eq,q,qdb,eqd->eqb", kappa, wq, Gq, grad)  # (E, Q, 4)
    contrib = np.einsum("eqb,qa->eba", flux, Nq)  # (E, 4, 4)
    G = np.zeros((n_nodes, n_nodes))
    rows = np.repeat(conn[:, :, None], 4, axis=2)
    cols = np.repeat(conn[:, None, :], 4, axis=1)
    np.add.at(G, (rows.ravel(), cols.ravel()), contrib.ravel())
    return G


@njit
def stiffness_sensitivity_numba(theta, s, conn, Nq, Gq, wq, n_nodes):
    E = conn.shape[0]
    Q = Nq.shape[0]
    G = np.zeros((n_nodes, n_nodes))
    for e in range(E):
        for q in range(Q):
            t = 0.0
            gx = 0.0
            gy = 0.0
            for a in range(4):
                k = conn[e, a]
                t += Nq[q, a] * theta[k]
                gx += Gq[q, 0, a] * s[k]
                gy += Gq[q, 1, a] * s[k]
            c = wq[q] * np.exp(t)
            for b in range(4):
                fb = c * (Gq[q, 0, b] * gx + Gq[q, 1, b] * gy)
                kb = conn[e, b]
                for a in range(4):
                    G[kb, conn[e, a]] += fb * Nq[q, a]
    return G


if _jit.USE_NUMBA:
    autocovariance = autocovariance_numba
    independence_mh = independence_mh_numba
    rwm_linear_l1 = rwm_linear_l1_numba
    element_stiffness = element_stiffness_numba
    stiffness_sensitivity = stiffness_sensitivity_numba
else:
    autocovariance = autocovariance_numpy
    independence_mh = independence_mh_numpy
    rwm_linear_l1 = rwm_linear_l1_numpy
    element_stiffness = element_stiffness_numpy
    stiffness_sensitivity = stiffness_sensitivity_numpy
