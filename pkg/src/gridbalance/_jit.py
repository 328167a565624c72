"""Optional numba acceleration.

The dispatch kernels are written in the numba-compatible subset of Python,
so they still run (slowly) as plain Python when numba is unavailable or
disabled with ``GRIDBALANCE_DISABLE_JIT=1``.
"""

import os

NUMBA_AVAILABLE = False

if os.environ.get("GRIDBALANCE_DISABLE_JIT", "") not in ("1", "true", "yes"):
    try:
        from numba import njit as _njit

        NUMBA_AVAILABLE = True
    except Exception:  # pragma: no cover - depends on environment
        _njit = None


def jit(func=None, *, refcount: bool = True):
    """Compile ``func`` with numba (cached, GIL released) when available.

    ``refcount=False`` compiles without the runtime's reference counting.
    Only kernels that never allocate may use it; it removes a per-call cost
    proportional to the number of array arguments, which dominates the
    small per-interval helpers.
    """
    if func is None:
        return lambda f: jit(f, refcount=refcount)
    if NUMBA_AVAILABLE:
        return _njit(cache=True, nogil=True, error_model="numpy", _nrt=refcount)(func)
    return func
