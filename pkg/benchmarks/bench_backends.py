#!/usr/bin/env python3
"""Timings for the numba and numpy kernel backends.

Covers the two hot kernels on representative shapes plus one
end-to-end half-step solve, and prints a speedup table.

    python benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from qreg import _kernels, rng
from qreg.functionals import QuotientProblem
from qreg.learning import HuberPolicy, LearnConfig, power_iterate, random_init
from qreg.synth import NoiseSpec, add_noise, make_2d

CASES = [
    ("conv 128x1 * 2x1", "conv", (128, 1), (2, 1)),
    ("conv 128x1 * 7x1", "conv", (128, 1), (7, 1)),
    ("conv 32x32 * 2x2", "conv", (32, 32), (2, 2)),
    ("conv 32x32 * 7x7", "conv", (32, 32), (7, 7)),
    ("corr 33x33 . 32x32", "corr", (33, 33), (32, 32)),
    ("corr 38x38 . 7x7", "corr", (38, 38), (7, 7)),
]


def _time_callable(fn, repeats, min_batch_seconds=0.05):
    fn()  # warm up (JIT compile, caches)
    batch = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(batch):
            fn()
        dt = time.perf_counter() - t0
        if dt >= min_batch_seconds:
            break
        batch *= 4
    best = dt / batch
    for _ in range(repeats - 1):
        t0 = time.perf_counter()
        for _ in range(batch):
            fn()
        best = min(best, (time.perf_counter() - t0) / batch)
    return best


def bench_kernels(repeats):
    rows = []
    for name, kind, shape_a, shape_b in CASES:
        a = rng.gaussian(1, shape_a[0] * shape_a[1]).reshape(shape_a)
        b = rng.gaussian(2, shape_b[0] * shape_b[1]).reshape(shape_b)
        per_backend = {}
        for backend in _kernels.available_backends():
            _kernels.set_backend(backend)
            fn = (
                (lambda: _kernels.conv_full(a, b))
                if kind == "conv"
                else (lambda: _kernels.corr_valid(a, b))
            )
            per_backend[backend] = _time_callable(fn, repeats)
        rows.append((name, per_backend))
    return rows


def bench_half_step(repeats):
    stripes = make_2d("stripes", 32, 32, orientation="vertical", thickness=4, spacing=4)
    noise = add_noise(np.zeros((32, 32)), NoiseSpec(sigma=0.3, seed=11))
    problem = QuotientProblem([stripes], [noise], kernel_shape=(2, 2), k=1)
    cfg = LearnConfig(restarts=1, seed=0, outer_max=8, huber=HuberPolicy())

    per_backend = {}
    for backend in _kernels.available_backends():
        _kernels.set_backend(backend)
        fn = lambda: power_iterate(random_init((2, 2), 1, 0), problem, cfg)
        per_backend[backend] = _time_callable(fn, max(2, repeats // 2))
    return [("power iteration, 8 outer steps (32x32, 2x2)", per_backend)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if len(_kernels.available_backends()) < 2:
        print("only one backend available:", _kernels.available_backends())

    original = _kernels.active_backend()
    try:
        rows = bench_kernels(args.repeats) + bench_half_step(args.repeats)
    finally:
        _kernels.set_backend(original)

    backends = sorted({b for _, per in rows for b in per})
    header = f"{'case':<45}" + "".join(f"{b:>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, per in rows:
        line = f"{name:<45}"
        for b in backends:
            line += f"{per[b] * 1e6:>12.2f}us"
        if len(backends) == 2:
            line += f"{per['numpy'] / per['numba']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
