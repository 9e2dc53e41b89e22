"""Numerical kernels with a compiled core and a numpy fallback.

The backend is picked once at import time:

  * ``XMODAL_KERNELS=fast``  require the compiled extension (ImportError if absent)
  * ``XMODAL_KERNELS=py``    force the numpy backend
  * unset / ``auto``         compiled if available, numpy otherwise

``backend_name()`` reports which one is live. Both backends implement the
same functions with identical semantics; `benchmarks/bench_kernels.py`
compares their throughput.
"""

import os

from . import _numpy_backend

_requested = os.environ.get("XMODAL_KERNELS", "auto")
if _requested not in ("auto", "fast", "py"):
    raise ValueError(
        f"XMODAL_KERNELS must be one of 'auto', 'fast', 'py'; got {_requested!r}"
    )

if _requested == "py":
    _impl = _numpy_backend
else:
    try:
        from . import _fast as _impl  # type: ignore[no-redef]
    except ImportError:
        if _requested == "fast":
            raise
        _impl = _numpy_backend

affine_forward = _impl.affine_forward
affine_backward = _impl.affine_backward
relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward
l2norm_rows = _impl.l2norm_rows
l2norm_rows_backward = _impl.l2norm_rows_backward
pairwise_cosine = _impl.pairwise_cosine
momentum_update = _impl.momentum_update
hinge_forward = _impl.hinge_forward
add_rows = _impl.add_rows


def backend_name() -> str:
    return _impl.NAME


__all__ = [
    "affine_forward",
    "affine_backward",
    "relu_forward",
    "relu_backward",
    "l2norm_rows",
    "l2norm_rows_backward",
    "pairwise_cosine",
    "momentum_update",
    "hinge_forward",
    "add_rows",
    "backend_name",
]
