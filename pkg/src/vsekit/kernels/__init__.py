"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is picked once at import time from ``VSEKIT_BACKEND``
(``numba`` or ``numpy``).  Without the variable, numba is used when it
imports cleanly.
"""
import os

import numpy as np

from . import _numpy

SH, MH, WEIGHTED = _numpy.SH, _numpy.MH, _numpy.WEIGHTED


def _load(name):
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ImportError(f"unknown VSEKIT_BACKEND {name!r}; expected 'numba' or 'numpy'")


_requested = os.environ.get("VSEKIT_BACKEND", "").strip().lower()
if _requested:
    _impl = _load(_requested)
else:
    try:
        _impl = _load("numba")
    except ImportError:
        _impl = _numpy

BACKEND = "numba" if _impl is not _numpy else "numpy"


def hinge_terms(pos, s_cap, s_img, excl, margin, kind, tau=1.0):
    return _impl.hinge_terms(
        np.ascontiguousarray(pos, dtype=np.float64),
        np.ascontiguousarray(s_cap, dtype=np.float64),
        np.ascontiguousarray(s_img, dtype=np.float64),
        np.ascontiguousarray(excl, dtype=np.int64),
        float(margin),
        int(kind),
        float(tau),
    )


def order_similarity(f, g):
    return _impl.order_similarity(
        np.ascontiguousarray(f, dtype=np.float64), np.ascontiguousarray(g, dtype=np.float64)
    )


def order_similarity_backward(f, g, grad_s):
    return _impl.order_similarity_backward(
        np.ascontiguousarray(f, dtype=np.float64),
        np.ascontiguousarray(g, dtype=np.float64),
        np.ascontiguousarray(grad_s, dtype=np.float64),
    )


def retrieval_ranks(scores, cpi):
    return _impl.retrieval_ranks(np.ascontiguousarray(scores, dtype=np.float64), int(cpi))


__all__ = [
    "BACKEND",
    "SH",
    "MH",
    "WEIGHTED",
    "hinge_terms",
    "order_similarity",
    "order_similarity_backward",
    "retrieval_ranks",
]
