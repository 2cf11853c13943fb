"""Backend selection for the hot kernels.

The compiled extension ``hgtpp._ckernels`` is used when it was built; the
numpy implementation in ``hgtpp._pykernels`` is the fallback.  Setting
``HGTPP_PURE_PYTHON=1`` forces the fallback.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("HGTPP_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def use_backend(name):
    """Switch backend at runtime ("python" or "cython"); returns the previous name."""
    global _impl, BACKEND
    previous = BACKEND
    if name == "python":
        _impl = _pykernels
    elif name == "cython":
        from . import _ckernels

        _impl = _ckernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    BACKEND = name
    return previous


def attention_forward(q, k, v, qmask, kmask, exclude_self):
    return _impl.attention_forward(
        np.ascontiguousarray(q, dtype=np.float64),
        np.ascontiguousarray(k, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        np.ascontiguousarray(qmask, dtype=bool),
        np.ascontiguousarray(kmask, dtype=bool),
        bool(exclude_self),
    )


def attention_backward(grad, q, k, v, alpha):
    return _impl.attention_backward(
        np.ascontiguousarray(grad, dtype=np.float64),
        np.ascontiguousarray(q, dtype=np.float64),
        np.ascontiguousarray(k, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        np.ascontiguousarray(alpha, dtype=np.float64),
    )


def index_add_rows(n_rows, idx, src, row_shape=()):
    """Scatter-add rows of ``src`` into a zero array of shape ``(n_rows,) + row_shape``."""
    idx = np.ascontiguousarray(idx, dtype=np.int64).ravel()
    src = np.asarray(src, dtype=np.float64).reshape((idx.shape[0],) + tuple(row_shape))
    return _impl.index_add_rows(int(n_rows), idx, src)
