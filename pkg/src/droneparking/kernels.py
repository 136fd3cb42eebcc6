"""Backend selection for the footprint kernels.

The compiled extension is used when it imports; otherwise the pure-Python
module takes over. Set ``DRONEPARKING_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("DRONEPARKING_PURE_PYTHON") == "1":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined,no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
ball_cells = _impl.ball_cells
swept_cells = _impl.swept_cells
trajectory_tiles = _impl.trajectory_tiles
accumulate_counts = _impl.accumulate_counts
edge_cost = _impl.edge_cost
n_substeps = _impl.n_substeps


def available_backends() -> dict:
    """Name -> module for every kernel backend importable in this process."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
