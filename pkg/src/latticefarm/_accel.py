"""Kernel backend selection.

Hot loops exist twice: scalar numba kernels (``kernels._nb``) and batched
numpy kernels (``kernels._np``). Setting ``LATTICEFARM_DISABLE_JIT=1`` (or
running without numba installed) selects the numpy path.
"""

import os

_flag = os.environ.get("LATTICEFARM_DISABLE_JIT", "").strip().lower()
JIT_DISABLED = _flag not in ("", "0", "false", "no")

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not JIT_DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` with project defaults, or identity when numba is missing."""
    if not HAS_NUMBA:  # pragma: no cover
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    import numba

    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)
