"""Hot numeric kernels with a compiled core and a pure-numpy fallback.

The Cython extension is picked at import time when available; set
``CTXSEG_PURE_PYTHON=1`` to force the fallback (used by the benchmark and
as an escape hatch on platforms without a compiler). ``BACKEND`` records
which implementation is active.
"""
import os

if os.environ.get("CTXSEG_PURE_PYTHON"):
    from ctxseg.kernels import _hausdorff_py as _impl

    BACKEND = "python"
else:
    try:
        from ctxseg.kernels import _hausdorff as _impl

        BACKEND = "compiled"
    except ImportError:
        from ctxseg.kernels import _hausdorff_py as _impl

        BACKEND = "python"

directed_hausdorff_sq = _impl.directed_hausdorff_sq
min_distances_sq = _impl.min_distances_sq

__all__ = ["directed_hausdorff_sq", "min_distances_sq", "BACKEND"]
