"""Kernel backend selection.

The compiled extension is used when importable; set ``PINNPRICE_PURE_PYTHON=1``
to force the NumPy fallback (useful for cross-checking and benchmarks).
"""

import os

from pinnprice import _pykernels

if os.environ.get("PINNPRICE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from pinnprice import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

tanh_jet_forward = _impl.tanh_jet_forward
tanh_jet_backward = _impl.tanh_jet_backward
psor_csr = _impl.psor_csr
