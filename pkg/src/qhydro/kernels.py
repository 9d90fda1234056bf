"""Kernel dispatch: the compiled extension when built, numpy fallback otherwise.

Set ``QHYDRO_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("QHYDRO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

integrate_lines = _impl.integrate_lines
marching_squares = _impl.marching_squares
segment_crossings = _impl.segment_crossings

__all__ = ["BACKEND", "integrate_lines", "marching_squares", "segment_crossings"]
