"""Numba switch.

Set ``ATTN_PRICER_DISABLE_NUMBA=1`` to route every kernel through the pure
numpy implementations (also the automatic fallback when numba is missing).
"""

import os

_DISABLED = os.environ.get("ATTN_PRICER_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    _njit = None


def njit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    opts = {"cache": True, "nogil": True}
    opts.update(kwargs)

    def wrap(f):
        if HAVE_NUMBA:
            return _njit(**opts)(f)
        return f

    return wrap(fn) if fn is not None else wrap
