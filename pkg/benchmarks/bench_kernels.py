"""Time the numba kernels against their numpy counterparts.

Run with ``python3 benchmarks/bench_kernels.py``. The first numba call is
excluded from the timings so compilation (or cache loading) does not count.
"""
import time

import numpy as np

from l1rto import kernels
from l1rto.fem import Grid, _reference_element


def best_of(func, repeat=5):
    func()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)

    x = rng.normal(size=100_000)
    x -= x.mean()
    yield "autocovariance N=1e5 lag=256", lambda k: (lambda: k(x, 256)), "autocovariance"

    lw = rng.normal(size=1_000_000)
    valid = np.ones(lw.size, dtype=bool)
    lv = np.log(rng.random(lw.size))
    yield "independence_mh N=1e6", lambda k: (lambda: k(lw, valid, -np.inf, lv)), "independence_mh"

    n, m = 15, 30
    Aw, yw = rng.normal(size=(m, n)), rng.normal(size=m)
    D = np.eye(n) - np.eye(n, k=-1)
    z, lvr = rng.normal(size=(20_000, n)), np.log(rng.random(20_000))
    yield "rwm_linear_l1 n=15 steps=2e4", lambda k: (lambda: k(np.zeros(n), Aw, yw, D, 8.0, 0.01, z, lvr, 10)), "rwm_linear_l1"

    g = Grid(64)
    Nq, Gq, wq = _reference_element()
    theta, s = rng.normal(size=g.n_nodes), rng.normal(size=g.n_nodes)
    yield "element_stiffness 64x64", lambda k: (lambda: k(theta, g.conn, Nq, Gq, wq)), "element_stiffness"

    g = Grid(16)
    theta, s = rng.normal(size=g.n_nodes), rng.normal(size=g.n_nodes)
    yield "stiffness_sensitivity 16x16", lambda k: (lambda: k(theta, s, g.conn, Nq, Gq, wq, g.n_nodes)), "stiffness_sensitivity"


def main():
    print(f"{'kernel':32s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for label, bind, name in cases():
        t_np = best_of(bind(getattr(kernels, name + "_numpy")))
        t_nb = best_of(bind(getattr(kernels, name + "_numba")))
        print(f"{label:32s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
