"""Numba toggle.

Set ``L1RTO_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. when
debugging or on platforms without a numba wheel.
"""
import os

_FLAG = os.environ.get("L1RTO_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(func):
    """Compile ``func`` in nopython mode when numba is importable.

    The compiled object is built even when the env flag is set, so the
    benchmark can still compare both paths; dispatch is decided by the
    caller through ``USE_NUMBA``.
    """
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)
