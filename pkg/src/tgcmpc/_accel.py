"""Numba switch.

Set ``TGCMPC_DISABLE_NUMBA=1`` before import to run every kernel through its
plain numpy implementation. The flag is read once at import time.
"""

import os

_DISABLED = os.environ.get("TGCMPC_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

USE_NUMBA = _njit is not None and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if USE_NUMBA:
        return _njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def _identity(fn):
        return fn

    return _identity
