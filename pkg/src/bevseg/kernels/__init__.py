"""Sampling kernels with a compiled fast path.

The compiled extension is preferred when it imported cleanly; set
``BEVSEG_KERNELS=numpy`` (or ``cython``) to force one backend.  Both
expose the same four functions with identical semantics, so everything
above this package is backend-agnostic.
"""

import os

from . import numpy_ref

try:
    from . import _core
except ImportError:
    _core = None

_choice = os.environ.get("BEVSEG_KERNELS", "").strip().lower()
if _choice == "numpy":
    _impl = numpy_ref
elif _choice == "cython":
    if _core is None:
        raise ImportError(
            "BEVSEG_KERNELS=cython but the compiled extension is unavailable")
    _impl = _core
elif _choice == "":
    _impl = _core if _core is not None else numpy_ref
else:
    raise ValueError(f"unknown BEVSEG_KERNELS value: {_choice!r}")

BACKEND = _impl.BACKEND
gather_bilinear = _impl.gather_bilinear
gather_bilinear_backward = _impl.gather_bilinear_backward
deform_agg = _impl.deform_agg
deform_agg_backward = _impl.deform_agg_backward

__all__ = [
    "BACKEND",
    "gather_bilinear",
    "gather_bilinear_backward",
    "deform_agg",
    "deform_agg_backward",
    "numpy_ref",
]
