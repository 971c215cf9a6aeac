"""Outer inverse power iteration with restarts, plus runtime certification.

One outer step, starting from a constraint-satisfying bank ``h``:

1. evaluate ``mu = F(h) / G(h)`` and a denominator subgradient ``s`` at
   ``h`` (with the iteration's smoothing width when Huber smoothing is
   active);
2. solve the tilted half-step
   ``argmin F(x) - mu <x - h, s> + ||x - h||^2`` over zero-mean banks;
3. renormalise the half-step result back onto the constraint set.

Evaluating ``mu`` and ``s`` at the renormalised iterate makes the
descent inequality of :func:`certify_sufficient_decrease` hold by
construction for each solved half-step; for the plain one-norm
denominator this is the same iteration as tilting with the values from
the previous half-point, because the quotient and the subdifferential
are scale-invariant there.

The learned quotient is non-convex, so the iteration runs from many
random initialisations and the bank with the smallest final quotient
wins; ties break to the lowest seed for determinism.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import rng
from .core import as_bank, joint_norm, operator_norm
from .errors import DegenerateDenominatorError, DegenerateProblemError
from .functionals import (
    MODE_INFIMAL,
    HuberParams,
    denominator_gradient,
    denominator_value,
    numerator_value,
    relative_gamma,
)
from .solvers import PDConfig, _solve_half_step_state, project_zero_mean


@dataclass(frozen=True)
class HuberPolicy:
    """How the denominator smoothing width of a trajectory is chosen.

    ``relative`` scales the width to the response magnitudes at the
    trajectory's (normalised) starting bank: factor times the largest
    absolute denominator response, floored.  The width is then frozen
    for the whole trajectory; re-adapting it per iterate would rescale
    the quotient (the smoothed denominator is roughly proportional to
    the width) and make consecutive ``mu`` values incomparable, which
    breaks the monotone-descent certificate.  ``fixed`` uses a constant
    width; ``none`` disables smoothing (plain one-norm, no
    gradient-based certification).
    """

    kind: str = "relative"
    factor: float = 1e-3
    floor: float = 1e-8
    gamma: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("relative", "fixed", "none"):
            raise ValueError(f"unknown huber policy {self.kind!r}")

    def resolve(self, problem, bank):
        if self.kind == "none":
            return None
        if self.kind == "fixed":
            return HuberParams(self.gamma)
        return HuberParams(relative_gamma(problem, bank, self.factor, self.floor))


@dataclass(frozen=True)
class LearnConfig:
    restarts: int = 100
    outer_max: int = 100
    outer_tol: float = 1e-8
    seed: int = 0
    inner: PDConfig = field(default_factory=PDConfig)
    huber: HuberPolicy = field(default_factory=HuberPolicy)
    jobs: int = 1

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.outer_max < 1:
            raise ValueError("outer_max must be >= 1")
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be > 0")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class TrajectoryRecord:
    """Everything one outer iteration leaves behind for certification."""

    h: np.ndarray
    h_half: np.ndarray
    mu: float
    mu_half: float
    g_half: float
    gamma: float  # 0.0 when smoothing is off
    s: np.ndarray
    grad_g_half: np.ndarray
    residual: float
    inner_iterations: int


@dataclass
class Trajectory:
    """Per-iteration records of one restart plus its final iterate.

    ``neg_sq_norm_sum`` is ``sum_j ||A_j||^2`` over the negative-signal
    operators, stored so the subgradient-bound certificate can be checked
    from the trajectory alone.
    """

    records: list
    final_bank: np.ndarray
    final_mu: float
    seed: int
    n_negatives: int
    neg_sq_norm_sum: float
    mode: str

    @property
    def mu_sequence(self):
        return np.array([r.mu for r in self.records] + [self.final_mu])


@dataclass
class CertificationReport:
    name: str
    passed: bool
    worst_margin: float
    n_violations: int
    n_checked: int
    detail: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.name}: {status} ({self.n_checked} checks, "
            f"{self.n_violations} violations, worst margin {self.worst_margin:.3e})"
        )


@dataclass
class LearnResult:
    """Winner of a multi-restart run plus the evidence behind it.

    For infimal runs ``parts`` holds the per-part single-filter results
    (one per decomposition part); ``trajectory`` is then the first
    part's winning trajectory and ``mu`` the joint quotient of the
    assembled bank.
    """

    bank: np.ndarray
    mu: float
    seed: int
    per_restart_mu: np.ndarray
    per_restart_seeds: np.ndarray
    aborted_seeds: list
    trajectory: Trajectory
    sufficient_decrease: Optional[CertificationReport] = None
    subgradient_bound: Optional[CertificationReport] = None
    parts: Optional[list] = None


def normalize_bank(bank, mode):
    """Project per-filter zero mean, then rescale onto the constraint set.

    Standard mode scales the whole bank to joint unit norm.  Infimal mode
    scales each filter to norm ``1/sqrt(K)`` (joint norm still one): with
    a single norm budget across filters the quotient of sums is a mediant
    and its minimiser parks all mass on the single best filter, which
    destroys the per-part pairing the infimal model is for.
    """
    bank = project_zero_mean(np.asarray(bank, dtype=np.float64))
    if mode == MODE_INFIMAL:
        norms = np.sqrt(np.sum(np.square(bank), axis=(1, 2), keepdims=True))
        if np.any(norms == 0.0):
            raise DegenerateDenominatorError("a filter collapsed to zero")
        return bank / (norms * math.sqrt(bank.shape[0]))
    norm = joint_norm(bank)
    if norm == 0.0:
        raise DegenerateDenominatorError("bank collapsed to zero")
    return bank / norm


def random_init(kernel_shape, k, seed, mode="standard"):
    """Gaussian init, zero-meaned per filter and normalised; seed-determined."""
    p, q = int(kernel_shape[0]), int(kernel_shape[1])
    attempt = seed
    while True:
        draw = rng.gaussian(attempt, k * p * q).reshape(k, p, q)
        try:
            return normalize_bank(draw, mode)
        except DegenerateDenominatorError:
            attempt += 1  # probability-zero path: redraw


def _problem_norms(problem):
    """Operator norms reused across restarts: half-step scale and L data."""
    if problem.mode == MODE_INFIMAL:
        pos_norm = max(
            operator_norm(problem.positive_ops_for_filter(k)[0])
            for k in range(problem.k)
        )
    else:
        ops, _ = problem.positive_ops_for_filter(0)
        pos_norm = operator_norm(ops) if ops else 0.0
    neg_sq_sum = sum(operator_norm([op]) ** 2 for op in problem.negative_ops())
    return pos_norm, neg_sq_sum


def power_iterate(init, problem, cfg=None, _norms=None):
    """Run the outer iteration from one initial bank until the quotient stalls.

    Raises :class:`DegenerateDenominatorError` if the denominator vanishes
    at any iterate (the certification hypotheses then fail, so the restart
    is aborted rather than perturbed).
    """
    cfg = cfg or LearnConfig(restarts=1)
    if problem.mode == MODE_INFIMAL:
        raise ValueError(
            "infimal problems decouple per filter; use learn_infimal "
            "(a joint tilt provably distorts the per-part filters)"
        )
    h = problem.check_bank(as_bank(init))
    h = normalize_bank(h, problem.mode)
    pos_norm, neg_sq_sum = _norms if _norms is not None else _problem_norms(problem)

    huber = cfg.huber.resolve(problem, h)  # width frozen for this trajectory

    def mu_at(bank):
        g = denominator_value(problem, bank, huber=huber)
        if g <= 0.0:
            raise DegenerateDenominatorError(
                "denominator vanished at an iterate; restart aborted"
            )
        return numerator_value(problem, bank) / g

    records = []
    mu_prev = None
    mu = math.inf
    duals = None  # warm-started across outer iterations
    for _ in range(cfg.outer_max):
        mu = mu_at(h)
        rel_change = (
            abs(mu - mu_prev) / max(mu_prev, 1e-12) if mu_prev is not None else 1.0
        )
        if mu_prev is not None and rel_change <= cfg.outer_tol:
            break
        mu_prev = mu
        s = denominator_gradient(problem, h, huber=huber)
        # early outer iterations tolerate loose half-steps; certification
        # slack scales with the recorded residual either way
        inner_cfg = replace(
            cfg.inner,
            gap_tol=min(1e-3, max(cfg.inner.gap_tol, 1e-2 * rel_change)),
        )
        h_half, info, duals = _solve_half_step_state(
            h, mu, s, problem, inner_cfg, op_norm=pos_norm, warm_duals=duals
        )
        if not info.converged:
            # tighten once with a larger budget, warm-started from the
            # first attempt; the best iterate can only improve
            h_half, info, duals = _solve_half_step_state(
                h, mu, s, problem,
                replace(inner_cfg, max_iters=4 * inner_cfg.max_iters),
                op_norm=pos_norm, warm_duals=duals,
            )
        g_half = denominator_value(problem, h_half, huber=huber)
        if g_half <= 0.0:
            raise DegenerateDenominatorError(
                "denominator vanished at a half-step; restart aborted"
            )
        mu_half = numerator_value(problem, h_half) / g_half
        records.append(
            TrajectoryRecord(
                h=h,
                h_half=h_half,
                mu=mu,
                mu_half=mu_half,
                g_half=g_half,
                gamma=huber.gamma if huber else 0.0,
                s=s,
                grad_g_half=denominator_gradient(problem, h_half, huber=huber),
                residual=info.residual,
                inner_iterations=info.iterations,
            )
        )
        h = normalize_bank(h_half, problem.mode)
    else:
        # iteration budget exhausted: evaluate the quotient at the final bank
        mu = mu_at(h)

    return Trajectory(
        records=records,
        final_bank=h,
        final_mu=mu,
        seed=-1,
        n_negatives=problem.n,
        neg_sq_norm_sum=neg_sq_sum,
        mode=problem.mode,
    )


def canonicalize_bank(bank, mode="standard"):
    """Fix the sign and order ambiguities so repeated runs agree bitwise.

    Each filter is flipped so its first largest-magnitude tap is positive.
    Standard-mode filters are interchangeable and get sorted
    lexicographically; infimal filters keep their pairing order.
    """
    bank = as_bank(bank).copy()
    for k in range(bank.shape[0]):
        flat = bank[k].ravel()
        idx = int(np.argmax(np.abs(flat)))
        if flat[idx] < 0:
            bank[k] = -bank[k]
    if mode != MODE_INFIMAL and bank.shape[0] > 1:
        order = sorted(range(bank.shape[0]), key=lambda k: tuple(bank[k].ravel()))
        bank = bank[order]
    return bank


def _run_restart(args):
    problem, cfg, seed, norms = args
    init = random_init(problem.kernel_shape, problem.k, seed, problem.mode)
    try:
        traj = power_iterate(init, problem, cfg, _norms=norms)
    except DegenerateDenominatorError:
        return seed, None, math.nan
    traj.seed = seed
    # restarts are ranked by the plain one-norm quotient of their final
    # banks: it is scale-free, so values are comparable across restarts
    # even though each trajectory froze its own smoothing width
    from .functionals import quotient

    try:
        mu_l1 = quotient(problem, traj.final_bank).mu
    except DegenerateDenominatorError:
        return seed, None, math.nan
    return seed, traj, mu_l1


def learn(problem, cfg=None):
    """Multi-restart minimisation of the quotient; returns the best bank.

    Restart ``r`` draws its initialisation from seed ``cfg.seed + r``.
    Aborted (degenerate) restarts are excluded; if every restart aborts a
    :class:`DegenerateProblemError` is raised.  The winner is certified
    before being returned.
    """
    cfg = cfg or LearnConfig()
    if problem.mode == MODE_INFIMAL:
        raise ValueError(
            "infimal problems decouple per filter; use learn_infimal"
        )
    if problem.m < 1:
        raise ValueError("learning needs at least one positive signal")
    norms = _problem_norms(problem)
    seeds = [cfg.seed + r for r in range(cfg.restarts)]
    tasks = [(problem, cfg, seed, norms) for seed in seeds]

    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(_run_restart, tasks))
    else:
        outcomes = [_run_restart(t) for t in tasks]

    per_mu = np.full(len(seeds), np.nan)
    aborted = []
    trajectories = {}
    final_mus = {}
    for i, (seed, traj, mu_l1) in enumerate(outcomes):
        if traj is None:
            aborted.append(seed)
        else:
            per_mu[i] = mu_l1
            trajectories[seed] = traj
            final_mus[seed] = mu_l1
    if not trajectories:
        raise DegenerateProblemError("every restart aborted with a degenerate denominator")

    # argmin of final mu, ties broken by the lowest seed
    winner_seed = min(trajectories, key=lambda s: (final_mus[s], s))
    winner = trajectories[winner_seed]

    result = LearnResult(
        bank=canonicalize_bank(winner.final_bank, problem.mode),
        mu=final_mus[winner_seed],
        seed=winner_seed,
        per_restart_mu=per_mu,
        per_restart_seeds=np.array(seeds),
        aborted_seeds=aborted,
        trajectory=winner,
    )
    result.sufficient_decrease = certify_sufficient_decrease(winner)
    if cfg.huber.kind != "none":
        result.subgradient_bound = certify_subgradient_bound(winner)
    return result


def learn_infimal(v, w, negatives, cfg=None, kernel_shape=(5, 1)):
    """Two-filter learning on a known decomposition ``u+ = v + w``.

    Filter 1 is trained against ``v`` and filter 2 against ``w``; both
    share the negatives.  Each part runs as its own single-filter
    quotient minimisation and the bank is assembled with equal norm
    ``1/sqrt(2)`` per filter (joint norm one).  Minimising the joint
    quotient of sums directly is a dead end: over a shared norm budget
    it is a mediant, so its minimiser parks all mass on the single best
    filter, and a shared eigenvalue tilt drags the other filter off its
    own quotient's minimiser.  The reported ``mu`` is the joint quotient
    of the assembled bank.
    """
    from .functionals import QuotientProblem, quotient

    parts = [v, w]
    part_results = []
    for part in parts:
        sub = QuotientProblem(
            positives=[part],
            negatives=list(negatives),
            kernel_shape=kernel_shape,
            k=1,
            mode="standard",
        )
        part_results.append(learn(sub, cfg))

    k = len(parts)
    bank = np.concatenate([res.bank for res in part_results]) / math.sqrt(k)
    joint = QuotientProblem(
        positives=parts,
        negatives=list(negatives),
        kernel_shape=kernel_shape,
        k=k,
        mode=MODE_INFIMAL,
    )
    mu = quotient(joint, bank).mu

    def merge(reports):
        reports = [r for r in reports if r is not None]
        if not reports:
            return None
        return CertificationReport(
            name=reports[0].name,
            passed=all(r.passed for r in reports),
            worst_margin=max(r.worst_margin for r in reports),
            n_violations=sum(r.n_violations for r in reports),
            n_checked=sum(r.n_checked for r in reports),
        )

    lead = part_results[0]
    return LearnResult(
        bank=bank,
        mu=mu,
        seed=lead.seed,
        per_restart_mu=np.stack([r.per_restart_mu for r in part_results]),
        per_restart_seeds=lead.per_restart_seeds,
        aborted_seeds=sorted(set().union(*(r.aborted_seeds for r in part_results))),
        trajectory=lead.trajectory,
        sufficient_decrease=merge([r.sufficient_decrease for r in part_results]),
        subgradient_bound=merge([r.subgradient_bound for r in part_results]),
        parts=part_results,
    )


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def certify_sufficient_decrease(traj):
    """Check the sufficient-decrease certificate along a trajectory.

    At every recorded iteration the inequality

        mu_half + ||h_half - h||^2 / G(h_half) <= mu

    must hold up to ten times the inner residual (propagated through the
    division by ``G``), and the reported quotient sequence must be
    nonincreasing within the same budget.
    """
    worst = -math.inf
    violations = 0
    checked = 0
    mus = []
    slacks = []
    for rec in traj.records:
        checked += 1
        slack = 10.0 * rec.residual / rec.g_half
        gap_term = float(np.sum(np.square(rec.h_half - rec.h))) / rec.g_half
        margin = (rec.mu_half + gap_term) - rec.mu  # <= 0 wanted
        if margin > slack:
            violations += 1
        worst = max(worst, margin - slack)
        mus.append(rec.mu)
        slacks.append(slack)
    mus.append(traj.final_mu)
    for i in range(len(mus) - 1):
        checked += 1
        margin = mus[i + 1] - mus[i]
        if margin > slacks[i]:
            violations += 1
        worst = max(worst, margin - slacks[i])
    return CertificationReport(
        name="sufficient-decrease",
        passed=violations == 0,
        worst_margin=worst if checked else 0.0,
        n_violations=violations,
        n_checked=checked,
    )


def certify_subgradient_bound(traj, gamma=None):
    """Check the subgradient bound recovered from half-step optimality.

    The numerator subgradient at the half-point is reconstructed from the
    optimality relation ``r = mu * s + 2 (h - h_half)`` and must satisfy

        ||r - mu_half * grad G(h_half)|| <= (2 + C L) ||h_half - h||

    with ``C = max(mu, mu_half)`` and ``L = sum_j ||A_j||^2 / (N gamma)``,
    again within ten inner residuals.  Requires Huber smoothing.
    """
    worst = -math.inf
    violations = 0
    checked = 0
    for rec in traj.records:
        g = gamma if gamma is not None else rec.gamma
        if g <= 0.0:
            raise ValueError(
                "subgradient-bound certification needs Huber smoothing "
                "(no smoothing width recorded)"
            )
        checked += 1
        lipschitz = traj.neg_sq_norm_sum / (traj.n_negatives * g)
        r = rec.mu * rec.s + 2.0 * (rec.h - rec.h_half)
        lhs = float(np.linalg.norm((r - rec.mu_half * rec.grad_g_half).ravel()))
        step = float(np.linalg.norm((rec.h_half - rec.h).ravel()))
        c = max(rec.mu, rec.mu_half)
        rhs = (2.0 + c * lipschitz) * step
        slack = 10.0 * rec.residual
        margin = lhs - rhs
        if margin > slack:
            violations += 1
        worst = max(worst, margin - slack)
    return CertificationReport(
        name="subgradient-bound",
        passed=violations == 0,
        worst_margin=worst if checked else 0.0,
        n_violations=violations,
        n_checked=checked,
    )
