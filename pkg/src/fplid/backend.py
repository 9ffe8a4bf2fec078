"""Kernel backend selection.

The compiled extension is preferred when present; the pure-NumPy kernels
are a drop-in replacement. `FPLID_BACKEND=pure` forces the fallback (used
by the benchmark script and for debugging).
"""

import os

from . import _mlp_numpy

if os.environ.get("FPLID_BACKEND", "auto") == "pure":
    _impl = _mlp_numpy
else:
    try:
        from . import _mlp_cy as _impl
    except ImportError:
        _impl = _mlp_numpy

#: Name of the active kernel backend ("compiled" or "pure").
BACKEND = "compiled" if _impl.__name__.endswith("_mlp_cy") else "pure"

mlp_forward = _impl.forward
mlp_forward_tangent = _impl.forward_tangent

# Training always runs on the NumPy kernels (backprop is not compiled).
mlp_forward_cache = _mlp_numpy.forward_cache
mlp_backward = _mlp_numpy.backward
