"""Kernel backend selection: compiled extension with pure-numpy fallback.

The compiled `_kernels` extension is used when importable; otherwise the
numpy implementation takes over transparently. STIPPLEMAP_BACKEND=numpy
forces the fallback, STIPPLEMAP_BACKEND=c requires the extension (raising
if it is missing). Both backends implement identical math; outputs agree
to float rounding.
"""

from __future__ import annotations

import os

_requested = os.environ.get("STIPPLEMAP_BACKEND", "auto").strip().lower()

if _requested in ("auto", ""):
    try:
        from . import _kernels as kernels
        BACKEND = "c"
    except ImportError:
        from . import _kernels_np as kernels
        BACKEND = "numpy"
elif _requested in ("c", "compiled", "cython"):
    from . import _kernels as kernels
    BACKEND = "c"
elif _requested in ("numpy", "np", "python"):
    from . import _kernels_np as kernels
    BACKEND = "numpy"
else:
    raise ValueError(
        f"unknown STIPPLEMAP_BACKEND={_requested!r}; use 'auto', 'c', or 'numpy'"
    )

__all__ = ["kernels", "BACKEND"]
