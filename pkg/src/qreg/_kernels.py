"""Hot inner kernels: dense full convolution and valid cross-correlation.

Two interchangeable implementations are provided:

* a numba ``@njit`` version (default whenever numba imports cleanly), and
* a pure-numpy version built on sliding windows.

The active implementation is chosen once at import time from the
``QREG_BACKEND`` environment variable (``numba``, ``numpy`` or ``auto``)
and can be switched at runtime with :func:`set_backend`, which the
benchmark harness and the cross-backend tests rely on.

Kernels here assume validated inputs: 2-D C-contiguous float64 arrays.
All shape checking lives in the callers.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["conv_full", "corr_valid", "active_backend", "set_backend", "available_backends"]


# ---------------------------------------------------------------------------
# pure-numpy reference path
# ---------------------------------------------------------------------------

def _conv_full_numpy(x, w):
    a0, a1 = x.shape
    b0, b1 = w.shape
    out = np.zeros((a0 + b0 - 1, a1 + b1 - 1))
    for s in range(b0):
        for t in range(b1):
            out[s:s + a0, t:t + a1] += w[s, t] * x
    return out


def _corr_valid_numpy(z, w):
    windows = sliding_window_view(z, w.shape)
    return np.tensordot(windows, w, axes=([2, 3], [0, 1]))


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

try:
    from numba import njit as _njit

    @_njit(cache=True)
    def _conv_full_numba(x, w):  # pragma: no cover - exercised via dispatch
        a0, a1 = x.shape
        b0, b1 = w.shape
        out = np.zeros((a0 + b0 - 1, a1 + b1 - 1))
        for s in range(b0):
            for t in range(b1):
                c = w[s, t]
                for i in range(a0):
                    for j in range(a1):
                        out[i + s, j + t] += c * x[i, j]
        return out

    @_njit(cache=True)
    def _corr_valid_numba(z, w):  # pragma: no cover - exercised via dispatch
        z0, z1 = z.shape
        w0, w1 = w.shape
        o0 = z0 - w0 + 1
        o1 = z1 - w1 + 1
        out = np.empty((o0, o1))
        for i in range(o0):
            for j in range(o1):
                acc = 0.0
                for s in range(w0):
                    for t in range(w1):
                        acc += z[i + s, j + t] * w[s, t]
                out[i, j] = acc
        return out

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    _HAVE_NUMBA = False


_IMPLS = {"numpy": (_conv_full_numpy, _corr_valid_numpy)}
if _HAVE_NUMBA:
    _IMPLS["numba"] = (_conv_full_numba, _corr_valid_numba)

_backend = None
conv_full = None
corr_valid = None


def available_backends():
    """Names of the backends usable in this process."""
    return tuple(sorted(_IMPLS))


def set_backend(name):
    """Select the kernel implementation; returns the previously active name."""
    global _backend, conv_full, corr_valid
    if name == "auto":
        name = "numba" if _HAVE_NUMBA else "numpy"
    if name not in _IMPLS:
        raise ValueError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        )
    previous = _backend
    conv_full, corr_valid = _IMPLS[name]
    _backend = name
    return previous


def active_backend():
    """Name of the kernel implementation currently in use."""
    return _backend


set_backend(os.environ.get("QREG_BACKEND", "auto"))
