"""Kernel backend selection.

Hot loops are compiled with numba when it is importable. Setting
``CVNA_BACKEND=numpy`` in the environment (before import) forces the
pure-numpy kernels instead; the two paths produce the same results.
"""
from __future__ import annotations

import functools
import os

_requested = os.environ.get("CVNA_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"CVNA_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    from numba import njit as _numba_njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False
    _numba_njit = None

USE_NUMBA = NUMBA_AVAILABLE and _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` with caching, or a no-op decorator without numba."""
    if NUMBA_AVAILABLE:
        kwargs.setdefault("cache", True)
        return _numba_njit(*args, **kwargs)

    def wrap(f):
        @functools.wraps(f)
        def inner(*a, **kw):
            return f(*a, **kw)

        return inner

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap


__all__ = ["BACKEND", "NUMBA_AVAILABLE", "USE_NUMBA", "njit"]
