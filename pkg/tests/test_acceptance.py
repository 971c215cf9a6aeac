"""Acceptance suite: one test per criterion, each printing PASS/FAIL.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; the test names themselves mirror the criteria.
"""

import json
import time

import numpy as np
import pytest

from qreg import rng
from qreg.cli import main as cli_main
from qreg.core import ConvOperator
from qreg.functionals import QuotientProblem, j_value
from qreg.learning import LearnConfig, learn, learn_infimal
from qreg.solvers import (
    BallConstraint,
    PDConfig,
    half_step_objective,
    project_l2_ball,
    project_zero_mean,
    soft_threshold,
    solve_half_step,
    solve_reconstruction,
)
from qreg.synth import NoiseSpec, add_noise, make_1d, make_2d

from oracles import halfstep_objective_oracle

DIAGONAL = 0.5 * np.array([[1.0, -1.0], [-1.0, 1.0]])
INV_SQRT2 = 1.0 / np.sqrt(2.0)
SECOND_DIFF = np.array([1.0, -2.0, 1.0]) / np.sqrt(6.0)


def _report(criterion, ok, detail=""):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    print(line, flush=True)
    assert ok, line


def _sign_matched_linf(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    return min(np.max(np.abs(a - b)), np.max(np.abs(a + b)))


def _dominant_window(taps, width):
    taps = np.asarray(taps).ravel()
    start = max(range(len(taps) - width + 1),
                key=lambda i: np.linalg.norm(taps[i:i + width]))
    window = taps[start:start + width]
    return window / np.linalg.norm(window)


def _two_tap_criterion(filter_taps, tol=5e-2):
    mags = np.sort(np.abs(np.asarray(filter_taps).ravel()))[::-1]
    return (
        abs(mags[0] - INV_SQRT2) <= tol
        and abs(mags[1] - INV_SQRT2) <= tol
        and (mags[2:] <= tol).all()
    )


def _pure_noise(shape, sigma, seed):
    return add_noise(np.zeros(shape), NoiseSpec(sigma=sigma, seed=seed))


def _pw_linear_zigzags(m=128):
    # piecewise-linear signals with several kinks, all ending at zero;
    # single-kink arches leave the quotient argmin visibly tilted by the
    # noise denominator, multiple kinks pin the curvature stencil
    z1 = make_1d("piecewise_linear", m, breakpoints=[32, 64, 96],
                 slopes=[1 / 32, -2 / 32, 2 / 32, -1 / 31])
    z2 = make_1d("piecewise_linear", m, breakpoints=[20, 50, 80, 108],
                 slopes=[1 / 20, -1 / 30, 1 / 30, -1 / 28, 0.0])
    z3 = make_1d("piecewise_linear", m, breakpoints=[48, 88],
                 slopes=[1 / 48, -2 / 40, 1 / 39])
    return [z1, z2, z3]


def test_ac01_tv_stencil_recovery():
    # warm the JIT cache before the clock starts
    j_value(np.ones(8), np.array([1.0, -1.0]))
    t0 = time.monotonic()
    problem = QuotientProblem(
        [make_1d("step", 128, interval=(32, 64), height=1.0)],
        [_pure_noise(128, 0.3, 7)],
        kernel_shape=(2, 1), k=1,
    )
    result = learn(problem, LearnConfig(restarts=32, seed=0))
    elapsed = time.monotonic() - t0
    err = float(np.max(np.abs(result.bank.ravel() - np.array([1.0, -1.0]) * INV_SQRT2)))
    _report(
        "AC-1 two-point stencil",
        err <= 1e-2 and elapsed <= 60.0,
        f"linf error {err:.2e}, {elapsed:.1f}s",
    )


def test_ac02_size_sweep():
    pos = make_1d("step", 128, interval=(32, 64), height=1.0)
    neg = _pure_noise(128, 0.3, 7)
    failures = []
    for n in range(2, 8):
        problem = QuotientProblem([pos], [neg], kernel_shape=(n, 1), k=1)
        result = learn(problem, LearnConfig(restarts=16, seed=0))
        if not _two_tap_criterion(result.bank):
            failures.append(n)
    _report("AC-2 size sweep n=2..7", not failures, f"failing sizes: {failures or 'none'}")


def test_ac03_second_order_stencil():
    problem = QuotientProblem(
        _pw_linear_zigzags(),
        [_pure_noise(128, 0.3, 21), _pure_noise(128, 0.3, 22)],
        kernel_shape=(5, 1), k=1,
    )
    result = learn(problem, LearnConfig(restarts=16, seed=0))
    window = _dominant_window(result.bank, 3)
    err = _sign_matched_linf(window, SECOND_DIFF)
    _report("AC-3 second-order stencil", err <= 5e-2, f"window linf error {err:.2e}")


def test_ac04_infimal_convolution():
    m = 128
    v = make_1d("piecewise_linear", m, breakpoints=[64], slopes=[1 / 64, -1 / 63])
    w = make_1d("staircase", m, positions=[30, 60, 95], jumps=[1.0, -0.6, -0.4])
    neg = _pure_noise(m, 0.3, 31)
    result = learn_infimal(
        v, w, [neg], LearnConfig(restarts=16, seed=0, outer_tol=1e-10),
        kernel_shape=(5, 1),
    )
    h1 = result.bank[0].ravel() / np.linalg.norm(result.bank[0])
    h2 = result.bank[1].ravel() / np.linalg.norm(result.bank[1])
    err1 = _sign_matched_linf(_dominant_window(h1, 3), SECOND_DIFF)
    ok2 = _two_tap_criterion(h2)
    _report(
        "AC-4 infimal convolution",
        err1 <= 5e-2 and ok2,
        f"h1 window error {err1:.2e}, h2 two-tap {'ok' if ok2 else 'bad'}",
    )


def test_ac05_diagonal_filter_both_orientations():
    neg = _pure_noise((32, 32), 0.3, 11)
    errs = []
    for img in (
        make_2d("stripes", 32, 32, orientation="vertical", thickness=4, spacing=4),
        make_2d("stripes", 32, 32, orientation="horizontal", thickness=2, spacing=3),
    ):
        problem = QuotientProblem([img], [neg], kernel_shape=(2, 2), k=1)
        result = learn(problem, LearnConfig(restarts=16, seed=0))
        errs.append(_sign_matched_linf(result.bank[0], DIAGONAL))
    ok = all(e <= 1e-2 for e in errs)
    _report(
        "AC-5 diagonal filter",
        ok,
        f"thick-vertical err {errs[0]:.2e}, thin-horizontal err {errs[1]:.2e}",
    )


def test_ac06_null_space_and_reconstruction():
    stripes = make_2d("stripes", 32, 32, orientation="vertical", thickness=2, spacing=2)
    bank = DIAGONAL[None]
    interior = j_value(stripes, bank[0], region="interior")

    sigma = np.sqrt(0.005)
    f = add_noise(stripes, NoiseSpec(sigma=sigma, seed=0))
    constraint = BallConstraint.from_noise_level(f, 1.0, sigma)
    u_hat, info = solve_reconstruction(
        f, bank, constraint, PDConfig(max_iters=20000, gap_tol=1e-9, check_every=25)
    )
    j_hat = j_value(u_hat, bank[0], region="interior")
    margin = float(np.linalg.norm(u_hat - f)) - constraint.radius
    ok = interior <= 1e-10 and j_hat <= 1e-6 and margin <= 1e-9
    _report(
        "AC-6 null-space property",
        ok,
        f"interior J(stripes)={interior:.1e}, interior J(u_hat)={j_hat:.1e}, "
        f"feasibility margin {margin:.1e}",
    )


def test_ac07_discrimination_ordering():
    pairs = {
        "orientation": (
            make_2d("stripes", 32, 32, orientation="vertical", thickness=4, spacing=4),
            make_2d("stripes", 32, 32, orientation="horizontal", thickness=4, spacing=4),
        ),
        "scale": (
            make_2d("stripes", 32, 32, orientation="vertical", thickness=4, spacing=4),
            make_2d("stripes", 32, 32, orientation="vertical", thickness=1, spacing=1),
        ),
        "angle": (
            make_2d("diagonal_stripes", 32, 32, angle=45, thickness=3, spacing=3),
            make_2d("diagonal_stripes", 32, 32, angle=135, thickness=3, spacing=3),
        ),
        "one-pixel angle": (
            make_2d("diagonal_stripes", 32, 32, angle=45, thickness=1, spacing=3),
            make_2d("diagonal_stripes", 32, 32, angle=135, thickness=1, spacing=3),
        ),
        "circle-vs-square": (
            make_2d("circle", 32, 32, radius=6),
            make_2d("rectangle", 32, 32, size=(12, 12)),
        ),
        "square-vs-circle": (
            make_2d("rectangle", 32, 32, size=(12, 12)),
            make_2d("circle", 32, 32, radius=6),
        ),
    }
    outcomes = {}
    for name, (u_pos, u_neg) in pairs.items():
        problem = QuotientProblem([u_pos], [u_neg], kernel_shape=(2, 2), k=1)
        result = learn(problem, LearnConfig(restarts=16, seed=0))
        j_pos = sum(j_value(u_pos, result.bank[k]) for k in range(result.bank.shape[0]))
        j_neg = sum(j_value(u_neg, result.bank[k]) for k in range(result.bank.shape[0]))
        outcomes[name] = (j_pos, j_neg)
    bad = {k: v for k, v in outcomes.items() if not v[0] < v[1]}
    detail = "; ".join(f"{k}: J+={v[0]:.3g} J-={v[1]:.3g}" for k, v in outcomes.items())
    _report("AC-7 discrimination ordering", not bad, detail)


def _certification_battery():
    problems = []
    for t in range(20):
        m = 48
        kind = ("step", "staircase", "piecewise_linear")[t % 3]
        if kind == "step":
            pos = [make_1d("step", m, interval=(8 + t % 5, 30 + t % 7), height=1.0 + 0.1 * t)]
        elif kind == "staircase":
            pos = [make_1d("staircase", m, positions=[10 + t % 4, 25, 38],
                           jumps=[1.0, -0.5, -0.5])]
        else:
            pos = [make_1d("piecewise_linear", m, breakpoints=[20 + t % 6],
                           slopes=[0.05, -0.04])]
        negs = [
            _pure_noise(m, 0.25 + 0.01 * t, 500 + 10 * t + j)
            for j in range(1 + t % 2)
        ]
        problems.append(QuotientProblem(pos, negs, kernel_shape=(2 + t % 4, 1), k=1))
    results = [
        learn(problem, LearnConfig(restarts=2, seed=1000 + t))
        for t, problem in enumerate(problems)
    ]
    return results


@pytest.fixture(scope="module")
def battery():
    return _certification_battery()


def test_ac08_sufficient_decrease_certification(battery):
    violations = sum(res.sufficient_decrease.n_violations for res in battery)
    worst = max(res.sufficient_decrease.worst_margin for res in battery)
    checked = sum(res.sufficient_decrease.n_checked for res in battery)
    _report(
        "AC-8 sufficient decrease",
        violations == 0,
        f"{checked} checks over 20 problems, worst margin {worst:.2e}",
    )


def test_ac09_subgradient_bound_certification(battery):
    violations = sum(res.subgradient_bound.n_violations for res in battery)
    worst = max(res.subgradient_bound.worst_margin for res in battery)
    checked = sum(res.subgradient_bound.n_checked for res in battery)
    _report(
        "AC-9 subgradient bound",
        violations == 0,
        f"{checked} checks over 20 problems, worst margin {worst:.2e}",
    )


def test_ac10_solver_oracles():
    # adjoint identity on 200 random triples
    adjoint_ok = True
    for trial in range(200):
        if trial % 2 == 0:
            u = rng.gaussian(3 * trial, 5 + trial % 9)
            shape = (2 + trial % 3, 1)
        else:
            r, c = 4 + trial % 5, 4 + (trial // 2) % 5
            u = rng.gaussian(3 * trial, r * c).reshape(r, c)
            shape = (2 + trial % 2, 2 + (trial // 3) % 3)
        op = ConvOperator(u, shape)
        h = rng.gaussian(3 * trial + 1, shape[0] * shape[1]).reshape(shape)
        y = rng.gaussian(3 * trial + 2, op.out_shape[0] * op.out_shape[1]).reshape(op.out_shape)
        err = abs(float(np.vdot(op.apply(h), y)) - float(np.vdot(h, op.adjoint(y))))
        if err > 1e-10 * np.linalg.norm(h) * np.linalg.norm(y):
            adjoint_ok = False

    # prox operations beat sampled oracles on 1000 instances
    prox_ok = True
    grid = np.linspace(-12.0, 12.0, 10000)
    xs = rng.gaussian(2, 1000) * 3.0
    ts = np.abs(rng.gaussian(3, 1000)) * 2.0
    for i in range(1000):
        out = float(soft_threshold(np.array([xs[i]]), ts[i])[0])
        best = 0.5 * (out - xs[i]) ** 2 + ts[i] * abs(out)
        if best > np.min(0.5 * (grid - xs[i]) ** 2 + ts[i] * np.abs(grid)) + 1e-9:
            prox_ok = False
    for i in range(1000):
        f = rng.gaussian(4000 + i, 8).reshape(8, 1)
        c = BallConstraint(f, 0.3 + (i % 5) * 0.4)
        x = rng.gaussian(9000 + i, 8).reshape(8, 1) * 2.0
        p = project_l2_ball(x, c)
        cand = project_l2_ball(rng.gaussian(14000 + i, 8).reshape(8, 1), c)
        z = project_zero_mean(x)
        cand_z = project_zero_mean(rng.gaussian(19000 + i, 8).reshape(8, 1))
        if (
            np.linalg.norm(x - p) > np.linalg.norm(x - cand) + 1e-10
            or np.linalg.norm(x - z) > np.linalg.norm(x - cand_z) + 1e-10
        ):
            prox_ok = False

    # half-step objective matches the convex oracle on tiny instances
    half_ok = True
    worst_half = 0.0
    for trial in range(5):
        m = 5 + trial
        problem = QuotientProblem(
            [rng.gaussian(100 + trial, m)], [rng.gaussian(200 + trial, m)],
            kernel_shape=(2 + trial % 2, 1), k=1,
        )
        p, q = problem.kernel_shape
        h_ref = project_zero_mean(rng.gaussian(300 + trial, p * q).reshape(1, p, q))
        h_ref /= np.linalg.norm(h_ref.ravel())
        s_ref = project_zero_mean(rng.gaussian(400 + trial, p * q).reshape(1, p, q)) * 0.4
        mu = 0.3 + 0.2 * trial
        bank, _ = solve_half_step(
            h_ref, mu, s_ref, problem,
            PDConfig(gap_tol=1e-12, max_iters=30000, check_every=5),
        )
        ours = half_step_objective(problem, bank, h_ref, mu, s_ref)
        oracle = halfstep_objective_oracle(problem, h_ref, mu, s_ref)
        worst_half = max(worst_half, abs(ours - oracle))
        if abs(ours - oracle) > 1e-7:
            half_ok = False

    # reconstruction feasibility and objective never worse than the input
    recon_ok = True
    bank = DIAGONAL[None]
    for trial in range(5):
        f = add_noise(
            make_2d("stripes", 16, 16, orientation="vertical", thickness=2, spacing=2),
            NoiseSpec(sigma=0.15, seed=trial),
        )
        c = BallConstraint(f, 0.4 + 0.3 * trial)
        u_hat, _ = solve_reconstruction(f, bank, c)
        j_hat = j_value(u_hat, bank[0], region="interior")
        j_f = j_value(f, bank[0], region="interior")
        if (
            np.linalg.norm(u_hat - f) > c.radius + 1e-9 * max(1.0, c.radius)
            or j_hat > j_f + 1e-8 * max(1.0, j_f)
        ):
            recon_ok = False

    ok = adjoint_ok and prox_ok and half_ok and recon_ok
    _report(
        "AC-10 solver oracles",
        ok,
        f"adjoint {'ok' if adjoint_ok else 'BAD'}, prox {'ok' if prox_ok else 'BAD'}, "
        f"half-step worst diff {worst_half:.1e}, reconstruction "
        f"{'ok' if recon_ok else 'BAD'}",
    )


def test_ac11_cmd_learn_determinism(tmp_path):
    cfg = {
        "kernel": {"rows": 3},
        "positives": [
            {"generate": {"kind": "step", "m": 64, "interval": [16, 32], "height": 1.0}}
        ],
        "negatives": [
            {"generate": {"kind": "step", "m": 64, "interval": [16, 32], "height": 0.0},
             "noise": {"sigma": 0.3, "seed": 7}}
        ],
        "learn": {"restarts": 4, "seed": 0},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for run_dir in ("one", "two"):
        out_dir = tmp_path / run_dir
        code = cli_main(["learn", str(path), "--out-dir", str(out_dir)])
        assert code == 0
        outs.append(out_dir)
    same_bank = (outs[0] / "bank.txt").read_bytes() == (outs[1] / "bank.txt").read_bytes()
    same_traj = (
        (outs[0] / "trajectory.qtrj").read_bytes()
        == (outs[1] / "trajectory.qtrj").read_bytes()
    )
    _report(
        "AC-11 determinism",
        same_bank and same_traj,
        f"bank bytes equal: {same_bank}, trajectory bytes equal: {same_traj}",
    )
