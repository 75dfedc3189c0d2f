"""Kernel dispatch: ``active`` is the numba module unless JIT is disabled."""

from .. import _accel
from . import _np

if _accel.HAS_NUMBA:
    from . import _nb
else:  # pragma: no cover
    _nb = None

active = _nb if _accel.USE_NUMBA else _np


def available():
    """All importable kernel modules, numba first."""
    return [m for m in (_nb, _np) if m is not None]
