"""Proximal building blocks and first-order primal-dual solvers.

Two convex subproblems are solved here, both with a Chambolle-Pock type
splitting (dual ascent on the filter responses, proximal descent on the
primal variable):

* the tilted, quadratically-penalised half-step of the outer power
  iteration, whose primal term is 2-strongly convex;
* the constrained reconstruction ``min sum_k ||u * h_k||_1`` subject to
  ``||u - f||_2 <= radius``, where the primal prox is the ball projection.

On these piecewise-linear-plus-quadratic problems the plain splitting
with ``tau = sigma = 0.99 / ||A||`` settles into local linear
convergence, which beats the accelerated O(1/N^2) schedule by orders of
magnitude; the accelerated variant was tried and rejected.

Both solvers report a rigorous residual: the gap between the best primal
value seen and the best Fenchel dual bound, which certification uses as
the inexactness budget.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import as_signal, operator_norm
from .errors import DimensionError


@dataclass(frozen=True)
class PDConfig:
    """Iteration budget and stopping gap for the primal-dual solvers.

    Step sizes follow ``tau = sigma = 0.99 / ||A||`` so that
    ``tau * sigma * ||A||^2 <= 1`` holds with margin for the 1% error
    the power-iteration norm estimate is allowed.
    """

    max_iters: int = 5000
    gap_tol: float = 1e-8
    check_every: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.gap_tol > 0:
            raise ValueError("gap_tol must be > 0")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")


@dataclass(frozen=True)
class BallConstraint:
    """The feasible set ``||u - center||_2 <= radius`` of the reconstruction."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_signal(self.center, "ball center"))
        if self.radius < 0:
            raise ValueError("ball radius must be >= 0")

    @staticmethod
    def from_noise_level(f, eta, sigma):
        """Radius ``eta * sigma * sqrt(m)`` around the observed signal."""
        f = as_signal(f, "signal")
        return BallConstraint(f, float(eta) * float(sigma) * np.sqrt(f.size))


class SolveInfo(NamedTuple):
    residual: float
    iterations: int
    converged: bool


def soft_threshold(x, t):
    """Shrinkage ``sign(x) * max(|x| - t, 0)``; the prox of ``t``-scaled L1."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def project_l2_ball(x, constraint):
    """Euclidean projection onto a ball; identity inside, radial pull outside."""
    x = as_signal(x, "signal")
    f = constraint.center
    if x.shape != f.shape:
        raise DimensionError(f"point {x.shape} vs ball center {f.shape}")
    d = x - f
    dist = float(np.linalg.norm(d))
    if dist <= constraint.radius:
        return x
    if dist == 0.0:
        return f.copy()
    return f + (constraint.radius / dist) * d


def project_zero_mean(h):
    """Orthogonal projection onto the zero-mean subspace, per filter.

    Works on a single kernel (2-D) or a bank (3-D, filter-wise).
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim == 2:
        return h - h.mean()
    if h.ndim == 3:
        return h - h.mean(axis=(1, 2), keepdims=True)
    raise DimensionError(f"expected kernel or bank, got ndim={h.ndim}")


def _dual_blocks(problem, bank_shape):
    """Per-filter operator lists and dual weights for the numerator."""
    blocks = []
    for k in range(bank_shape[0]):
        ops, weight = problem.positive_ops_for_filter(k)
        blocks.append((ops, weight))
    return blocks


def half_step_objective(problem, bank, h_ref, mu, s_ref):
    """Tilted numerator objective minimised by :func:`solve_half_step`."""
    from .functionals import numerator_value

    diff = bank - h_ref
    return (
        numerator_value(problem, bank)
        - mu * float(np.vdot(diff, s_ref))
        + float(np.sum(diff * diff))
    )


def solve_half_step(h_ref, mu, s_ref, problem, cfg=None, op_norm=None):
    """Minimise ``F(h) - mu <h - h_ref, s_ref> + ||h - h_ref||^2`` over
    per-filter zero-mean banks.

    The quadratic term makes the primal 2-strongly convex and the
    minimiser unique.  The zero-mean constraint commutes with the
    isotropic quadratic prox and is enforced by exact projection inside
    the primal update.  ``h_ref`` is expected to satisfy the constraints
    (it is the current outer iterate), which the dual bound relies on.

    Returns ``(bank, SolveInfo)`` where the bank is the best (lowest
    primal objective) feasible iterate seen and ``SolveInfo.residual``
    bounds its objective suboptimality via the Fenchel dual.
    """
    h, info, _ = _solve_half_step_state(h_ref, mu, s_ref, problem, cfg, op_norm)
    return h, info


def _solve_half_step_state(h_ref, mu, s_ref, problem, cfg=None, op_norm=None,
                           warm_duals=None):
    """Half-step solve that also returns its dual state for warm starting."""
    cfg = cfg or PDConfig()
    h_ref = problem.check_bank(h_ref)
    s_ref = problem.check_bank(s_ref)
    blocks = _dual_blocks(problem, h_ref.shape)

    if all(not ops or weight == 0.0 for ops, weight in blocks):
        # no numerator term: the quadratic alone, projected
        out = project_zero_mean(h_ref + 0.5 * mu * s_ref)
        return out, SolveInfo(0.0, 0, True), None

    if op_norm is None:
        if problem.mode == "infimal":
            op_norm = max(operator_norm(ops) for ops, _ in blocks if ops)
        else:
            op_norm = operator_norm(blocks[0][0])
    if op_norm <= 0.0:
        out = project_zero_mean(h_ref + 0.5 * mu * s_ref)
        return out, SolveInfo(0.0, 0, True), None

    tau = sigma = 0.99 / op_norm
    tilt = 2.0 * h_ref + mu * s_ref

    h = h_ref.copy()
    h_bar = h.copy()
    if warm_duals is not None:
        duals = [[y.copy() for y in block] for block in warm_duals]
        for (ops, weight), block in zip(blocks, duals):
            for y in block:
                np.clip(y, -weight, weight, out=y)
    else:
        duals = [
            [np.zeros(op.out_shape) for op in ops] for ops, _ in blocks
        ]

    def primal_value(bank):
        return half_step_objective(problem, bank, h_ref, mu, s_ref)

    def dual_value(at):
        # -g*(-A^T y) with g the tilted quadratic plus the zero-mean
        # indicator: <A^T y, h_ref> - 1/4 ||P0(mu s_ref - A^T y)||^2,
        # valid because h_ref itself satisfies the constraints
        resid = project_zero_mean(mu * s_ref - at)
        return float(np.vdot(at, h_ref)) - 0.25 * float(np.sum(resid * resid))

    best_obj = primal_value(h)
    best_h = h.copy()
    best_dual = -np.inf
    gap = np.inf
    iterations = 0
    converged = False

    for it in range(1, cfg.max_iters + 1):
        iterations = it
        at = np.zeros_like(h)
        for k, (ops, weight) in enumerate(blocks):
            for idx, op in enumerate(ops):
                y = duals[k][idx] + sigma * op.apply(h_bar[k])
                np.clip(y, -weight, weight, out=y)
                duals[k][idx] = y
                at[k] += op.adjoint(y)

        h_old = h
        h = project_zero_mean((h - tau * at + tau * tilt) / (1.0 + 2.0 * tau))
        h_bar = 2.0 * h - h_old

        if it % cfg.check_every == 0 or it == cfg.max_iters:
            obj = primal_value(h)
            if obj < best_obj:
                best_obj = obj
                best_h = h.copy()
            best_dual = max(best_dual, dual_value(at))
            gap = best_obj - best_dual
            if gap <= cfg.gap_tol * max(1.0, abs(best_obj)):
                converged = True
                break

    residual = max(gap, 0.0) if np.isfinite(gap) else np.inf
    return best_h, SolveInfo(residual, iterations, converged), duals


def reconstruction_objective(u, bank_ops):
    return float(sum(np.sum(np.abs(op.apply(u))) for op in bank_ops))


def _null_space_warm_start(f, ops, constraint, tol=1e-12, max_iters=4000):
    """Feasible starting point pulled toward the operators' joint null space.

    Conjugate gradients on ``sum_k T_k^T T_k x = sum_k T_k^T T_k f``
    (started at zero, so iterates stay in the row space) recovers the
    row-space component ``x`` of ``f``; ``f - x`` is the null-space
    projection.  The objective is exactly linear along the segment from
    ``f`` to ``f - x``, so the ball-clipped point on that segment both
    stays feasible and scales the objective down by the clip factor.
    When the ball contains the projection itself this lands on (near)
    zero objective immediately, which the plain splitting approaches
    only very slowly.
    """

    def normal_op(x):
        out = np.zeros_like(x)
        for op in ops:
            out += op.adjoint(op.apply(x))
        return out

    b = normal_op(f)
    x = np.zeros_like(f)
    residual = b.copy()
    direction = residual.copy()
    rs = float(np.vdot(residual, residual))
    threshold = tol * np.sqrt(float(np.vdot(b, b)))
    for _ in range(max_iters):
        if np.sqrt(rs) <= threshold:
            break
        ad = normal_op(direction)
        alpha = rs / float(np.vdot(direction, ad))
        x += alpha * direction
        residual -= alpha * ad
        rs_new = float(np.vdot(residual, residual))
        direction = residual + (rs_new / rs) * direction
        rs = rs_new
    dist = float(np.linalg.norm(x))
    if dist == 0.0:
        return f.copy()
    step = min(1.0, constraint.radius / dist)
    return f - step * x


def solve_reconstruction(f, bank, constraint, cfg=None):
    """Minimise the interior filter response of ``u`` over the ball
    ``||u - f||_2 <= radius``.

    The objective is ``sum_k ||u * h_k||_1`` restricted to full-overlap
    output positions: with the zero-padding ring included the operator
    would be injective and the learned null spaces (stripes under the
    diagonal stencil) unreachable, so shape-preserving reconstruction
    would be impossible for any radius.

    Starts from the feasible point ``u = f`` and returns the best feasible
    iterate, so the returned objective never exceeds the objective at
    ``f``.  Deterministic for fixed inputs and config.
    """
    from .core import InteriorConvOperator, as_bank

    cfg = cfg or PDConfig()
    f = as_signal(f, "signal")
    bank = as_bank(bank)
    if constraint.center.shape != f.shape:
        raise DimensionError("ball center shape differs from the signal")

    ops = [InteriorConvOperator(bank[k], f.shape) for k in range(bank.shape[0])]

    if constraint.radius == 0.0:
        return f.copy(), SolveInfo(0.0, 0, True)
    op_norm = operator_norm(ops)
    if op_norm == 0.0:
        return f.copy(), SolveInfo(0.0, 0, True)

    tau = sigma = 0.99 / op_norm
    u = _null_space_warm_start(f, ops, constraint, tol=min(1e-12, cfg.gap_tol))
    u_bar = u.copy()
    duals = [np.zeros(op.out_shape) for op in ops]

    best_obj = reconstruction_objective(u, ops)
    best_u = u.copy()
    best_dual = -np.inf
    gap = np.inf
    iterations = 0
    converged = False

    for it in range(1, cfg.max_iters + 1):
        iterations = it
        at = np.zeros_like(u)
        for k, op in enumerate(ops):
            y = duals[k] + sigma * op.apply(u_bar)
            np.clip(y, -1.0, 1.0, out=y)
            duals[k] = y
            at += op.adjoint(y)

        u_old = u
        u = project_l2_ball(u - tau * at, constraint)
        u_bar = 2.0 * u - u_old

        if it % cfg.check_every == 0 or it == cfg.max_iters:
            obj = reconstruction_objective(u, ops)
            if obj < best_obj:
                best_obj = obj
                best_u = u.copy()
            # Fenchel bound: <A^T y, f> - radius * ||A^T y||_2
            dual = float(np.vdot(at, f)) - constraint.radius * float(np.linalg.norm(at))
            best_dual = max(best_dual, dual)
            gap = best_obj - best_dual
            if gap <= cfg.gap_tol * max(1.0, abs(best_obj)):
                converged = True
                break

    residual = max(gap, 0.0) if np.isfinite(gap) else np.inf
    return best_u, SolveInfo(residual, iterations, converged)
