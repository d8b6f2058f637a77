"""Kernel backend selection.

The compiled Cython kernels are preferred; the pure-Python twin is used
when the extension is missing or ``MCNLEARN_PURE_PYTHON=1`` is set. Both
expose the same three functions over CSR adjacency arrays:

    reachable_mask(indptr, indices, n, seeds) -> uint8[n]
    saved_weight(indptr, indices, n, weights, seeds) -> int
    ldp(indptr, indices, n) -> float64[n, 5]
"""

import os

from . import _pykern

if os.environ.get("MCNLEARN_PURE_PYTHON") == "1":
    _impl = _pykern
    BACKEND = "python"
else:
    try:
        from . import _ckern as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build environment
        _impl = _pykern
        BACKEND = "python"

reachable_mask = _impl.reachable_mask
saved_weight = _impl.saved_weight
ldp = _impl.ldp


def backend_name() -> str:
    """Name of the kernel backend in use ("cython" or "python")."""
    return BACKEND
