"""Numba switch.

Hot loops in :mod:`dctjpeg.kernels` are compiled with numba when it is
importable and ``DCTJPEG_DISABLE_NUMBA`` is unset (or ``0``). Otherwise the
codec loops run as plain Python (slow, bit-identical output) and the neighbor
sweep switches to a vectorized numpy version whose sums may differ in the
last bits.
The flag is read once at import time.
"""

import os

try:
    import numba

    _numba_available = True
except ImportError:  # pragma: no cover
    numba = None
    _numba_available = False

_disabled = os.environ.get("DCTJPEG_DISABLE_NUMBA", "").strip().lower() not in (
    "",
    "0",
    "false",
    "no",
)

USE_NUMBA = _numba_available and not _disabled


def optional_njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise.

    The undecorated function stays reachable as ``.py_func`` in both cases so
    tests and benchmarks can compare the two paths in one process.
    """

    def decorator(func):
        if USE_NUMBA:
            return numba.njit(*args, **kwargs)(func)
        func.py_func = func
        return func

    return decorator
