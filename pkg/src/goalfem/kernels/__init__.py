"""Element kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen at import time: numba if it imports cleanly and the
environment variable GOALFEM_NUMBA is not set to "0", numpy otherwise.
``use_backend`` switches at runtime (used by tests and the kernel
benchmark).
"""

import os

from . import _numpy

if os.environ.get("GOALFEM_NUMBA", "1") != "0":
    try:
        from . import _numba
        HAS_NUMBA = True
    except ImportError:
        _numba = None
        HAS_NUMBA = False
else:
    _numba = None
    HAS_NUMBA = False

_impl = _numba if HAS_NUMBA else _numpy
BACKEND = "numba" if HAS_NUMBA else "numpy"


def use_backend(name):
    """Select the active backend ('numpy' or 'numba'); returns its name."""
    global _impl, BACKEND
    if name == "numpy":
        _impl, BACKEND = _numpy, "numpy"
    elif name == "numba":
        if _numba is None:
            raise RuntimeError("numba backend unavailable")
        _impl, BACKEND = _numba, "numba"
    else:
        raise ValueError(f"unknown backend {name!r}")
    return BACKEND


def shape_q4(pts):
    return _impl.shape_q4(pts)


def dshape_q4(pts):
    return _impl.dshape_q4(pts)


def batch_bmat(coords, gp):
    return _impl.batch_bmat(coords, gp)


def batch_stiffness(coords, D, gp, gw):
    return _impl.batch_stiffness(coords, D, gp, gw)
