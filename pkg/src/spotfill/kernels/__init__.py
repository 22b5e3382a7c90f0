"""Backend selection for the hot geometry kernels.

The compiled extension is preferred when built; the numpy fallback is always
available. Set SPOTFILL_KERNELS=numpy or =native to force a backend.
"""

import os

from . import _numpy

try:
    from . import _native
except ImportError:
    _native = None

_requested = os.environ.get("SPOTFILL_KERNELS", "").strip().lower()
if _requested == "numpy":
    _impl = _numpy
elif _requested == "native":
    if _native is None:
        raise ImportError("SPOTFILL_KERNELS=native but the compiled extension is not built")
    _impl = _native
elif _requested == "":
    _impl = _native if _native is not None else _numpy
else:
    raise ImportError(f"unknown SPOTFILL_KERNELS value: {_requested!r}")

BACKEND = _impl.BACKEND
nearest_neighbors = _impl.nearest_neighbors
farthest_point_sample = _impl.farthest_point_sample
ball_query = _impl.ball_query

__all__ = ["BACKEND", "nearest_neighbors", "farthest_point_sample", "ball_query"]
