"""Optional numba acceleration.

Kernels are written twice: an explicit-loop version compiled with numba and a
vectorized numpy version. ``USE_NUMBA`` selects which one the public entry
points dispatch to. Set ``SHSG_DISABLE_NUMBA=1`` (or numba's own
``NUMBA_DISABLE_JIT=1``) to force the numpy path.
"""
from __future__ import annotations

import os

try:
    import numba as _nb
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _nb = None
    HAS_NUMBA = False


def _flag(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAS_NUMBA and not (_flag("SHSG_DISABLE_NUMBA") or _flag("NUMBA_DISABLE_JIT"))


def try_jit(*args, **kwargs):
    """Compile with ``numba.njit`` when numba is importable.

    Works bare (``@try_jit``) or with options (``@try_jit(parallel=False)``).
    Without numba the function is returned unchanged.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)

    def wrap(fn):
        if not HAS_NUMBA:
            return fn
        return _nb.njit(**kwargs)(fn)

    if len(args) == 1 and callable(args[0]):
        return wrap(args[0])
    return wrap


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
