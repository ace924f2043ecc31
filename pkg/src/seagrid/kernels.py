"""Kernel backend selection.

Imports the compiled extension when present, otherwise the numpy fallback.
Set SEAGRID_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the equivalence tests).
"""

import os

if os.environ.get("SEAGRID_PURE_PYTHON") == "1":
    from . import _kernels_py as _impl
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as _impl

BACKEND = _impl.BACKEND
accum_outer = _impl.accum_outer
accum_block = _impl.accum_block
accum_vec = _impl.accum_vec
scatter_rows = _impl.scatter_rows
accum_blocks = _impl.accum_blocks
