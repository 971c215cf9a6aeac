"""Counter-based random number generation with a pinned algorithm.

Reproducibility across platforms and re-implementations requires that
"same seed" means the same bytes everywhere, so none of the platform
default generators are used.  The generator is the splitmix64 sequence:

    state_k = seed + (k + 1) * 0x9E3779B97F4A7C15      (mod 2**64)
    out_k   = mix(state_k)

where ``mix`` is the splitmix64 finaliser.  Because ``out_k`` is a pure
function of ``(seed, k)`` the stream is a counter-based generator: any
slice can be produced independently and deterministically.

Uniform doubles take the top 53 bits mapped to (0, 1]; Gaussian samples
come from the Box-Muller transform applied to consecutive pairs.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z):
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def raw_uint64(seed, start, count):
    """``count`` outputs of the stream for ``seed`` beginning at counter ``start``."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    k = np.arange(start, start + count, dtype=np.uint64)
    state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + (k + np.uint64(1)) * _GAMMA
    return _mix(state)


def uniform(seed, count, start=0):
    """Doubles in (0, 1], 53-bit resolution, deterministic per (seed, counter)."""
    bits = raw_uint64(seed, start, count)
    return ((bits >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53


def gaussian(seed, count, start=0):
    """Standard normal draws via Box-Muller on consecutive uniform pairs.

    Pair ``p`` consumes counters ``2p`` and ``2p + 1``, so disjoint
    count/start windows (in units of pairs) never overlap.
    """
    pairs = (count + 1) // 2
    u = uniform(seed, 2 * pairs, start=2 * start)
    u1 = u[0::2]
    u2 = u[1::2]
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    return z[:count]
