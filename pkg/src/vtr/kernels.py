"""Kernel backend selection.

The compiled extension is used when importable; otherwise the numpy
fallback takes over. Set VTR_KERNELS=cython|python to force a backend
(cython raises if the extension is missing).
"""

import os

_requested = os.environ.get("VTR_KERNELS", "auto")
if _requested not in ("auto", "cython", "python"):
    raise RuntimeError(f"VTR_KERNELS must be auto, cython or python, got {_requested!r}")

if _requested in ("auto", "cython"):
    try:
        from vtr._kernels import dbmm_blocks

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from vtr._kernels_py import dbmm_blocks

        BACKEND = "python"
else:
    from vtr._kernels_py import dbmm_blocks

    BACKEND = "python"

__all__ = ["BACKEND", "dbmm_blocks"]
