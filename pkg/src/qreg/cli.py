"""Command-line front end.

Subcommands map onto the library surface: ``synth`` writes generator
output, ``learn`` runs a configured multi-restart learning job and emits
the bank, the winning trajectory and certification reports,
``reconstruct`` denoises against a stored bank, ``evaluate`` prints
functional values, ``verify`` re-checks a stored trajectory, and
``run-all`` walks the checked-in experiment configs.

Exit codes: 0 success, 1 certification failure, 2 usage error, 3 data
error.  The ``QREG_SEED`` environment variable overrides the config seed.
"""

import argparse
import glob
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .core import as_bank
from .errors import QregError
from .functionals import QuotientProblem, j_value
from .io_formats import (
    load_config,
    read_bank,
    read_signal,
    read_trajectory,
    realize_signal,
    write_bank,
    write_signal,
    write_trajectory,
)
from .learning import certify_sufficient_decrease, certify_subgradient_bound, learn, learn_infimal
from .solvers import BallConstraint, PDConfig, solve_reconstruction
from .synth import NoiseSpec, add_noise, make_1d, make_2d

EXIT_OK = 0
EXIT_CERTIFICATION = 1
EXIT_USAGE = 2
EXIT_DATA = 3


def _bank_j(u, bank, region="full"):
    bank = as_bank(bank)
    return sum(j_value(u, bank[k], region=region) for k in range(bank.shape[0]))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _parse_params(pairs):
    params = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise argparse.ArgumentTypeError(f"--param expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}


def cmd_synth(args):
    params = _parse_params(args.param)
    if args.rows is not None:
        u = make_2d(args.kind, args.rows, args.cols, **params)
    else:
        if args.m is None:
            raise QregError("either --m (1-D) or --rows/--cols (2-D) is required")
        u = make_1d(args.kind, args.m, **params)
    if args.noise_sigma:
        u = add_noise(u, NoiseSpec(sigma=args.noise_sigma, seed=args.noise_seed))
    write_signal(args.out, u, format=args.format)
    print(f"wrote {args.out} shape={np.asarray(u).shape}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# learn
# ---------------------------------------------------------------------------

def _problem_from_config(config):
    positives = [realize_signal(s, config.base_dir) for s in config.positives]
    negatives = [realize_signal(s, config.base_dir) for s in config.negatives]
    return QuotientProblem(
        positives=positives,
        negatives=negatives,
        kernel_shape=config.kernel_shape,
        k=config.k,
        mode=config.mode,
    )


def cmd_learn(args):
    config = load_config(args.config)
    learn_cfg = config.learn
    if os.environ.get("QREG_SEED"):
        learn_cfg = replace(learn_cfg, seed=int(os.environ["QREG_SEED"]))
    if args.restarts is not None:
        learn_cfg = replace(learn_cfg, restarts=args.restarts)
    if args.jobs is not None:
        learn_cfg = replace(learn_cfg, jobs=args.jobs)

    t0 = time.monotonic()
    if config.mode == "infimal":
        parts = [realize_signal(s, config.base_dir) for s in config.positives]
        negatives = [realize_signal(s, config.base_dir) for s in config.negatives]
        result = learn_infimal(
            parts[0], parts[1], negatives, learn_cfg, kernel_shape=config.kernel_shape
        )
    else:
        problem = _problem_from_config(config)
        result = learn(problem, learn_cfg)
    elapsed = time.monotonic() - t0

    os.makedirs(args.out_dir, exist_ok=True)
    bank_path = os.path.join(args.out_dir, "bank.txt")
    mu_path = os.path.join(args.out_dir, "restarts.csv")
    report_path = os.path.join(args.out_dir, "certification.txt")

    write_bank(bank_path, result.bank)
    traj_paths = []
    if result.parts is not None:
        for idx, part in enumerate(result.parts, start=1):
            traj_paths.append(os.path.join(args.out_dir, f"trajectory_part{idx}.qtrj"))
            write_trajectory(traj_paths[-1], part.trajectory)
    else:
        traj_paths.append(os.path.join(args.out_dir, "trajectory.qtrj"))
        write_trajectory(traj_paths[0], result.trajectory)
    rows = ["seed,mu,status"]
    mu_table = np.atleast_2d(result.per_restart_mu)
    for i, seed in enumerate(result.per_restart_seeds):
        status = "aborted" if int(seed) in result.aborted_seeds else "ok"
        cell = ";".join(
            "" if np.isnan(mu) else "%.17g" % mu for mu in mu_table[:, i]
        )
        rows.append(f"{int(seed)},{cell},{status}")
    with open(mu_path, "w") as fh:
        fh.write("\n".join(rows) + "\n")

    reports = [result.sufficient_decrease] + ([result.subgradient_bound] if result.subgradient_bound else [])
    with open(report_path, "w") as fh:
        for rep in reports:
            fh.write(str(rep) + "\n")

    print(f"best mu {result.mu:.12g} from seed {result.seed} "
          f"({learn_cfg.restarts} restarts, {elapsed:.1f}s)")
    for rep in reports:
        print(rep)
    print(f"wrote {bank_path}, {', '.join(traj_paths)}, {mu_path}, {report_path}")
    ok = all(rep.passed for rep in reports)
    return EXIT_OK if ok else EXIT_CERTIFICATION


# ---------------------------------------------------------------------------
# reconstruct / evaluate / verify
# ---------------------------------------------------------------------------

def cmd_reconstruct(args):
    f = read_signal(args.signal, format=args.format)
    bank = read_bank(args.bank)
    sigma = args.sigma
    if args.sigma_sq is not None:
        sigma = float(np.sqrt(args.sigma_sq))
    constraint = BallConstraint.from_noise_level(f, args.eta, sigma)
    cfg = PDConfig(max_iters=args.max_iters, gap_tol=args.gap_tol)
    u_hat, info = solve_reconstruction(f, bank, constraint, cfg)
    write_signal(args.out, u_hat)

    dist = float(np.linalg.norm(u_hat - f))
    print(f"J(u_hat) full={_bank_j(u_hat, bank):.9g} "
          f"interior={_bank_j(u_hat, bank, 'interior'):.9g}")
    print(f"J(f)     full={_bank_j(f, bank):.9g} "
          f"interior={_bank_j(f, bank, 'interior'):.9g}")
    print(f"||u_hat - f||_2 = {dist:.9g}  radius = {constraint.radius:.9g}  "
          f"feasibility margin = {dist - constraint.radius:.3e}")
    print(f"solver: {info.iterations} iterations, residual {info.residual:.3e}, "
          f"converged={info.converged}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    u = read_signal(args.signal, format=args.format)
    bank = read_bank(args.bank)
    full = _bank_j(u, bank)
    interior = _bank_j(u, bank, "interior")
    print(f"J full     = {full:.12g}")
    print(f"J interior = {interior:.12g}")
    print(f"J boundary = {full - interior:.12g}")
    return EXIT_OK


def cmd_verify(args):
    traj = read_trajectory(args.trajectory)
    reports = [certify_sufficient_decrease(traj)]
    if any(rec.gamma > 0 for rec in traj.records):
        reports.append(certify_subgradient_bound(traj))
    for rep in reports:
        print(rep)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CERTIFICATION


# ---------------------------------------------------------------------------
# run-all
# ---------------------------------------------------------------------------

def cmd_run_all(args):
    pattern = os.path.join(args.experiments, "fig*", "*.json")
    configs = sorted(glob.glob(pattern))
    if not configs:
        raise QregError(f"no experiment configs found under {args.experiments}")
    failures = 0
    for path in configs:
        rel = os.path.relpath(path, args.experiments)
        out_dir = os.path.join(args.out_dir, os.path.splitext(rel)[0])
        print(f"=== {rel} ===")
        config = load_config(path)
        restarts = None
        if not args.full and config.learn.restarts > args.restarts_cap:
            restarts = args.restarts_cap
        ns = argparse.Namespace(
            config=path, out_dir=out_dir, restarts=restarts, jobs=args.jobs
        )
        code = cmd_learn(ns)
        if code != EXIT_OK:
            failures += 1
        recon_code = _maybe_reconstruct(config, out_dir)
        if recon_code != EXIT_OK:
            failures += 1
    print(f"run-all complete: {len(configs)} configs, {failures} failures")
    return EXIT_OK if failures == 0 else EXIT_CERTIFICATION


def _maybe_reconstruct(config, out_dir):
    if config.reconstruct is None:
        return EXIT_OK
    spec = config.reconstruct
    if spec.target is not None:
        clean = realize_signal(spec.target, config.base_dir)
    else:
        clean = realize_signal(config.positives[0], config.base_dir)
    noisy = add_noise(clean, NoiseSpec(sigma=spec.sigma, seed=spec.noise_seed))
    if spec.bank_file is not None:
        bank = read_bank(os.path.join(config.base_dir, spec.bank_file))
    else:
        bank = read_bank(os.path.join(out_dir, "bank.txt"))
    constraint = BallConstraint.from_noise_level(noisy, spec.eta, spec.sigma)
    u_hat, _ = solve_reconstruction(noisy, bank, constraint)
    out_path = os.path.join(out_dir, "reconstruction.f64")
    write_signal(out_path, u_hat)
    err = float(np.linalg.norm(u_hat - clean)) / max(float(np.linalg.norm(clean)), 1e-30)
    print(f"reconstruction: J={_bank_j(u_hat, bank):.6g} "
          f"rel-error-vs-clean={err:.4g} -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="qreg",
        description="Learn sparse convolutional regulariser filters by "
        "quotient minimisation and apply them via constrained "
        "L1 reconstruction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a test signal")
    p.add_argument("--kind", required=True)
    p.add_argument("--m", type=int, help="length for 1-D signals")
    p.add_argument("--rows", type=int, help="rows for 2-D signals")
    p.add_argument("--cols", type=int, help="cols for 2-D signals")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="generator parameter, JSON-encoded value")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "pgm", "f64"])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("learn", help="run a configured learning job")
    p.add_argument("config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--restarts", type=int, help="override config restarts")
    p.add_argument("--jobs", type=int, help="parallel restarts")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("reconstruct", help="denoise a signal against a bank")
    p.add_argument("signal")
    p.add_argument("bank")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--sigma-sq", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--gap-tol", type=float, default=1e-8)
    p.add_argument("--format", choices=["csv", "pgm", "f64"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="print functional values for a signal")
    p.add_argument("signal")
    p.add_argument("bank")
    p.add_argument("--format", choices=["csv", "pgm", "f64"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", help="re-run certification on a trajectory")
    p.add_argument("trajectory")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run-all", help="run every checked-in experiment config")
    p.add_argument("--experiments", default="experiments")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--restarts-cap", type=int, default=32)
    p.add_argument("--full", action="store_true",
                   help="run configs at their configured restart counts")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except QregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
