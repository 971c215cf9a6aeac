"""The sparsity functional, its Huber-smoothed variant and the quotient.

The object everything else optimises is

    mu(h) = F(h) / G(h)

where ``F`` aggregates the one-norm of filter responses over signals the
filters should annihilate and ``G`` over signals they should respond to.
In standard mode every filter sees every signal and the sums carry
``1/M`` and ``1/N`` factors; in infimal mode filter ``k`` sees only the
``k``-th part of a known decomposition in the numerator, and the parts
enter as a plain sum.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core import ConvOperator, as_bank, as_signal
from .errors import DegenerateDenominatorError, DimensionError

MODE_STANDARD = "standard"
MODE_INFIMAL = "infimal"


@dataclass(frozen=True)
class HuberParams:
    """Smoothing width for the Huber one-norm; must be positive."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"huber gamma must be > 0, got {self.gamma}")


@dataclass
class QuotientProblem:
    """Training data and filter geometry for one quotient instance.

    ``positives`` are the signals the filters should respond weakly to
    and ``negatives`` the ones they should respond strongly to.  In
    infimal mode ``positives`` is the ordered decomposition list, one
    part per filter, so ``k == len(positives)`` is required there.
    ``smoothing`` is the default denominator smoothing used when an
    operation is not given an explicit override.
    """

    positives: list
    negatives: list
    kernel_shape: tuple
    k: int = 1
    mode: str = MODE_STANDARD
    smoothing: Optional[HuberParams] = None
    _pos_ops: list = field(default_factory=list, repr=False)
    _neg_ops: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.positives = [as_signal(u, "positive") for u in self.positives]
        self.negatives = [as_signal(u, "negative") for u in self.negatives]
        p, q = int(self.kernel_shape[0]), int(self.kernel_shape[1])
        if p * q < 2:
            raise DimensionError("kernels must have at least two taps")
        self.kernel_shape = (p, q)
        if self.k < 1:
            raise ValueError("filter count must be >= 1")
        if self.mode not in (MODE_STANDARD, MODE_INFIMAL):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == MODE_INFIMAL and self.k != len(self.positives):
            raise ValueError(
                "infimal mode pairs one filter per decomposition part: "
                f"k={self.k} but {len(self.positives)} parts given"
            )
        if not self.negatives:
            raise ValueError("at least one negative signal is required")
        self._pos_ops = [ConvOperator(u, self.kernel_shape) for u in self.positives]
        self._neg_ops = [ConvOperator(u, self.kernel_shape) for u in self.negatives]

    @property
    def m(self):
        return len(self.positives)

    @property
    def n(self):
        return len(self.negatives)

    def positive_ops_for_filter(self, k):
        """Numerator operators seen by filter ``k`` (with their weight)."""
        if self.mode == MODE_INFIMAL:
            return [self._pos_ops[k]], 1.0
        return self._pos_ops, 1.0 / self.m if self.m else 0.0

    def negative_ops(self):
        return self._neg_ops

    def check_bank(self, bank):
        bank = as_bank(bank)
        if bank.shape[0] != self.k or bank.shape[1:] != self.kernel_shape:
            raise DimensionError(
                f"bank shape {bank.shape} does not match problem "
                f"(k={self.k}, kernel={self.kernel_shape})"
            )
        return bank


class QuotientValue(NamedTuple):
    numerator: float
    denominator: float
    mu: float


def j_value(u, h, region="full"):
    """One-norm of the full-extent convolution ``u * h``.

    ``region="interior"`` restricts the sum to output positions where the
    kernel fully overlaps the signal, discarding the zero-padding ring;
    ``region="boundary"`` keeps only that ring.
    """
    us = as_signal(u, "signal")
    hs = as_signal(h, "kernel")
    op = ConvOperator(us, hs.shape)
    out = op.apply(hs)
    if region == "full":
        return float(np.sum(np.abs(out)))
    p, q = hs.shape
    if us.shape[0] < p or us.shape[1] < q:
        raise DimensionError("interior region requires the kernel to fit the signal")
    interior = float(np.sum(np.abs(out[p - 1:us.shape[0], q - 1:us.shape[1]])))
    if region == "interior":
        return interior
    if region == "boundary":
        return float(np.sum(np.abs(out))) - interior
    raise ValueError(f"unknown region {region!r}")


def huber_scalar(x, gamma):
    """Elementwise Huber penalty: quadratic inside gamma, affine outside."""
    ax = np.abs(x)
    return np.where(ax <= gamma, 0.5 * x * x, gamma * (ax - 0.5 * gamma))


def huber_grad_scalar(x, gamma):
    return np.clip(x, -gamma, gamma)


def huber_value(x, params):
    """Sum of the Huber penalty over all entries of a signal.

    Continuously differentiable surrogate for ``gamma * ||x||_1``; it
    satisfies ``gamma*||x||_1 - (gamma^2/2)*count <= value <= gamma*||x||_1``.
    """
    arr = as_signal(x, "signal")
    return float(np.sum(huber_scalar(arr, params.gamma)))


def _response_l1(ops, weight, h):
    total = 0.0
    for op in ops:
        total += np.sum(np.abs(op.apply(h)))
    return weight * total


def numerator_value(problem, bank):
    bank = problem.check_bank(bank)
    total = 0.0
    for k in range(problem.k):
        ops, weight = problem.positive_ops_for_filter(k)
        total += _response_l1(ops, weight, bank[k])
    return float(total)


def denominator_value(problem, bank, huber=None):
    bank = problem.check_bank(bank)
    if huber is None:
        huber = problem.smoothing
    total = 0.0
    weight = 1.0 / problem.n
    for k in range(problem.k):
        for op in problem.negative_ops():
            out = op.apply(bank[k])
            if huber is None:
                total += weight * np.sum(np.abs(out))
            else:
                total += weight * np.sum(huber_scalar(out, huber.gamma))
    return float(total)


def quotient(problem, bank, huber=None):
    """Evaluate ``(F, G, F/G)``; raises when the denominator vanishes."""
    f = numerator_value(problem, bank)
    g = denominator_value(problem, bank, huber=huber)
    if g <= 0.0:
        raise DegenerateDenominatorError(
            "quotient denominator vanished; the bank annihilates every negative"
        )
    return QuotientValue(f, g, f / g)


def _sign(x):
    # sign with sign(0) = 0: the minimal-norm subgradient selection
    return np.sign(x)


def numerator_subgradient(problem, bank):
    """An element of the numerator's subdifferential, filter by filter."""
    bank = problem.check_bank(bank)
    sub = np.zeros_like(bank)
    for k in range(problem.k):
        ops, weight = problem.positive_ops_for_filter(k)
        for op in ops:
            sub[k] += weight * op.adjoint(_sign(op.apply(bank[k])))
    return sub


def denominator_gradient(problem, bank, huber=None):
    """Denominator subgradient (plain one-norm) or exact gradient (Huber)."""
    bank = problem.check_bank(bank)
    if huber is None:
        huber = problem.smoothing
    grad = np.zeros_like(bank)
    weight = 1.0 / problem.n
    for k in range(problem.k):
        for op in problem.negative_ops():
            out = op.apply(bank[k])
            if huber is None:
                grad[k] += weight * op.adjoint(_sign(out))
            else:
                grad[k] += weight * op.adjoint(huber_grad_scalar(out, huber.gamma))
    return grad


def denominator_lipschitz(problem, gamma, neg_sq_norm_sum=None):
    """The gradient-Lipschitz constant used in certification reports.

    Computed as ``(1/N) * sum_j ||A_j||^2 / gamma``; for smoothing widths
    below one this upper-bounds the true constant of the Huber gradient.
    """
    if neg_sq_norm_sum is None:
        from .core import operator_norm

        neg_sq_norm_sum = sum(operator_norm([op]) ** 2 for op in problem.negative_ops())
    return neg_sq_norm_sum / (problem.n * gamma)


def relative_gamma(problem, bank, factor=1e-3, floor=1e-8):
    """Smoothing width scaled to the current denominator responses."""
    bank = problem.check_bank(bank)
    peak = 0.0
    for k in range(problem.k):
        for op in problem.negative_ops():
            peak = max(peak, float(np.max(np.abs(op.apply(bank[k])))))
    return max(factor * peak, floor)
