"""Backend selection for the density-matrix kernels.

The compiled extension is used when it was built; set ``VBQC_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("VBQC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels_c as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

apply_1q = _impl.apply_1q
apply_2q = _impl.apply_2q
depolarize = _impl.depolarize
dephase = _impl.dephase
project = _impl.project
partial_trace = _impl.partial_trace

__all__ = [
    "BACKEND",
    "apply_1q",
    "apply_2q",
    "depolarize",
    "dephase",
    "project",
    "partial_trace",
]
