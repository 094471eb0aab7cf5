"""Numba switch.

Set ``ANISO_ACF_DISABLE_NUMBA=1`` to route every hot kernel through its
pure-numpy implementation. The flag is read once, at import time.
"""
import os

_FLAG = os.environ.get("ANISO_ACF_DISABLE_NUMBA", "").strip().lower()

try:
    from numba import njit as _numba_njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return _numba_njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
