"""Signals, kernels, filter banks and discrete convolution as a linear map.

Conventions used throughout the package:

* signals and kernels are 2-D float64 arrays of shape ``(rows, cols)``;
  one-dimensional data is stored as a column, ``(m, 1)``;
* filter banks are 3-D arrays of shape ``(K, p, q)``;
* convolution is dense, full-extent (output ``rows + p - 1`` by
  ``cols + q - 1``) with zero padding outside the signal domain.

Full extent keeps the map ``h -> u * h`` injective for any nonzero
fixed signal ``u``, which the quotient model downstream relies on.
"""

import numpy as np

from . import _kernels
from .errors import DimensionError

JOINT_NORM_TOL = 1e-12
ZERO_MEAN_TOL = 1e-12


def as_signal(x, name="signal"):
    """Coerce to the internal 2-D float64 layout and validate.

    Accepts 1-D (stored as a column) or 2-D array-likes.  Rejects empty
    arrays and non-finite entries.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 1-D or 2-D, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DimensionError(f"{name} must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return np.ascontiguousarray(arr)


def as_kernel(x, name="kernel"):
    """Coerce a kernel like :func:`as_signal`.

    Size-1 kernels are accepted here (they are useful as identity probes);
    the zero-mean constraint that makes them inadmissible is enforced at
    the filter-bank level.
    """
    return as_signal(x, name=name)


def as_bank(x, name="bank"):
    """Coerce to a ``(K, p, q)`` float64 filter bank and validate.

    A 2-D input is treated as a single filter.  Each filter must have at
    least two taps: a zero-mean kernel with one tap is identically zero.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise DimensionError(f"{name} must have shape (K, p, q), got ndim={arr.ndim}")
    if arr.shape[0] < 1:
        raise DimensionError(f"{name} must contain at least one filter")
    if arr.shape[1] * arr.shape[2] < 2:
        raise DimensionError(f"{name} filters must have at least two taps")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} contains NaN or Inf entries")
    return np.ascontiguousarray(arr)


def joint_norm(bank):
    """Euclidean norm of the concatenated filter entries."""
    return float(np.sqrt(np.sum(np.square(bank))))


def bank_constraint_errors(bank):
    """(joint-norm error, worst per-filter mean magnitude) for a bank."""
    norm_err = abs(joint_norm(bank) - 1.0)
    mean_err = float(np.max(np.abs(bank.mean(axis=(1, 2))))) if bank.size else 0.0
    return norm_err, mean_err


def convolve(u, h):
    """Dense full convolution of a signal with a kernel, zero padded.

    ``(u * h)[t] = sum_s u[s] h[t - s]`` with out-of-range terms zero;
    the output has shape ``(rows + p - 1, cols + q - 1)``.  If both
    inputs arrive 1-D the result is returned 1-D.
    """
    flat = np.ndim(u) == 1 and np.ndim(h) == 1
    us = as_signal(u, "signal")
    hs = as_kernel(h, "kernel")
    # iterate taps of the smaller factor; convolution is symmetric
    if us.size >= hs.size:
        out = _kernels.conv_full(us, hs)
    else:
        out = _kernels.conv_full(hs, us)
    return out[:, 0] if flat else out


class ConvOperator:
    """The linear map ``x -> fixed * x`` for variables of a fixed shape.

    With ``fixed`` a training signal and ``var_shape`` a kernel shape this
    is the map the learning functionals differentiate through; with
    ``fixed`` a filter and ``var_shape`` an image shape it is the
    regularisation operator of the reconstruction problem.  ``adjoint``
    is the exact transpose of the zero-padded full convolution.
    """

    def __init__(self, fixed, var_shape):
        self.fixed = as_signal(fixed, "fixed signal")
        p, q = int(var_shape[0]), int(var_shape[1])
        if p < 1 or q < 1:
            raise DimensionError(f"invalid variable shape {(p, q)}")
        self.var_shape = (p, q)
        self.out_shape = (self.fixed.shape[0] + p - 1, self.fixed.shape[1] + q - 1)

    def apply(self, x):
        if x.shape != self.var_shape:
            raise DimensionError(
                f"operator expects input {self.var_shape}, got {x.shape}"
            )
        if self.fixed.size >= x.size:
            return _kernels.conv_full(self.fixed, x)
        return _kernels.conv_full(x, self.fixed)

    def adjoint(self, y):
        if y.shape != self.out_shape:
            raise DimensionError(
                f"adjoint expects input {self.out_shape}, got {y.shape}"
            )
        return _kernels.corr_valid(y, self.fixed)

    def norm_upper_bound(self):
        # ||A|| <= ||fixed||_1 by Young's inequality for l2-l2 convolution
        return float(np.sum(np.abs(self.fixed)))


class InteriorConvOperator:
    """The map ``u -> (u * h) restricted to full-overlap positions``.

    This drops the zero-padding ring of the full convolution, so signals
    whose every kernel-sized window is orthogonal to ``h`` (stripes under
    the diagonal stencil, for instance) are genuinely in the null space.
    The reconstruction solver regularises with this response; the full
    extent would make the operator injective and an exact null space
    impossible.

    Forward is the valid cross-correlation with the 180-degree flip of
    ``h``; the exact adjoint is then the full convolution with the same
    flipped kernel.
    """

    def __init__(self, kernel, signal_shape):
        kernel = as_kernel(kernel)
        m0, m1 = int(signal_shape[0]), int(signal_shape[1])
        p, q = kernel.shape
        if m0 < p or m1 < q:
            raise DimensionError(
                f"kernel {kernel.shape} does not fit inside signal {(m0, m1)}"
            )
        self.flipped = np.ascontiguousarray(kernel[::-1, ::-1])
        self.var_shape = (m0, m1)
        self.out_shape = (m0 - p + 1, m1 - q + 1)

    def apply(self, u):
        if u.shape != self.var_shape:
            raise DimensionError(
                f"operator expects input {self.var_shape}, got {u.shape}"
            )
        return _kernels.corr_valid(u, self.flipped)

    def adjoint(self, y):
        if y.shape != self.out_shape:
            raise DimensionError(
                f"adjoint expects input {self.out_shape}, got {y.shape}"
            )
        return _kernels.conv_full(y, self.flipped)


def operator_norm(ops, tol=1e-6, max_iters=1000):
    """Spectral norm of the stacked operator ``x -> (A_1 x, ..., A_J x)``.

    Power iteration on ``sum_i A_i^T A_i`` run to ``tol`` relative change
    of the Rayleigh quotient.  Returns 0.0 when every operator annihilates
    the whole space (all-zero fixed signals); callers that need an
    invertible scaling must reject that case.
    """
    ops = list(ops)
    if not ops:
        raise DimensionError("operator stack must be nonempty")
    shape = ops[0].var_shape
    for op in ops[1:]:
        if op.var_shape != shape:
            raise DimensionError("operator stack mixes variable shapes")

    # deterministic, symmetry-free starting vector
    from .rng import gaussian

    x = gaussian(0x5EED0FEED, shape[0] * shape[1]).reshape(shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iters):
        y = np.zeros(shape)
        for op in ops:
            y += op.adjoint(op.apply(x))
        lam_new = float(np.vdot(x, y))
        norm_y = float(np.linalg.norm(y))
        if norm_y == 0.0:
            return 0.0
        x = y / norm_y
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return float(np.sqrt(max(lam, 0.0)))
