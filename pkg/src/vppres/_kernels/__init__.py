"""Numeric kernel backend selection.

The compiled Cython extension is preferred when importable; the pure numpy
twin is the fallback.  Set ``VPPRES_PURE=1`` to force the fallback (used by
the cross-backend tests and the benchmark).
"""

import os

if os.environ.get("VPPRES_PURE") == "1":
    from . import pure as _impl
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

BACKEND = _impl.BACKEND
eigvals = _impl.eigvals
rk4_switched = _impl.rk4_switched

__all__ = ["BACKEND", "eigvals", "rk4_switched"]
