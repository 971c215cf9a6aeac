"""Deterministic generators for the training-signal classes.

Every generator is a pure function of its parameters; noise comes from
the pinned counter-based generator in :mod:`qreg.rng`, so outputs are
byte-identical across runs and platforms.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .core import as_signal
from .errors import ParameterError


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise level and stream seed."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError("noise sigma must be >= 0")


def make_1d(kind, m, **params):
    """One-dimensional test signals, returned as length-``m`` arrays.

    kinds:
      step             -- 0 outside ``interval=(lo, hi)``, ``height`` inside
      piecewise_linear -- continuous, ``slopes`` between ``breakpoints``,
                          starting at ``start``
      staircase        -- piecewise constant, jumping by ``jumps[i]`` at
                          ``positions[i]``, starting at ``start``
      ramp             -- affine, ``base + slope * t``
    """
    if m < 4:
        raise ParameterError("signal length must be >= 4")
    t = np.arange(m, dtype=np.float64)

    if kind == "step":
        lo, hi = params.pop("interval", (m // 4, (3 * m) // 4))
        height = float(params.pop("height", 1.0))
        _reject_unknown(kind, params)
        if not (0 <= lo < hi <= m):
            raise ParameterError(f"step interval [{lo}, {hi}) out of range for m={m}")
        u = np.zeros(m)
        u[lo:hi] = height
        return u

    if kind == "piecewise_linear":
        breakpoints = list(params.pop("breakpoints", []))
        slopes = list(params.pop("slopes", [0.0]))
        start = float(params.pop("start", 0.0))
        _reject_unknown(kind, params)
        if len(slopes) != len(breakpoints) + 1:
            raise ParameterError("need exactly one more slope than breakpoints")
        if any(not 0 < b < m for b in breakpoints) or breakpoints != sorted(breakpoints):
            raise ParameterError("breakpoints must be increasing and inside (0, m)")
        u = np.empty(m)
        u[0] = start
        slope = np.empty(m - 1)
        bounds = [0] + [int(b) for b in breakpoints] + [m - 1]
        for seg, s in enumerate(slopes):
            slope[bounds[seg]:bounds[seg + 1]] = s
        u[1:] = start + np.cumsum(slope)
        return u

    if kind == "staircase":
        positions = list(params.pop("positions", []))
        jumps = list(params.pop("jumps", []))
        start = float(params.pop("start", 0.0))
        _reject_unknown(kind, params)
        if len(positions) != len(jumps):
            raise ParameterError("positions and jumps must pair up")
        if any(not 0 < p < m for p in positions) or positions != sorted(positions):
            raise ParameterError("jump positions must be increasing and inside (0, m)")
        u = np.full(m, start)
        for pos, jump in zip(positions, jumps):
            u[int(pos):] += float(jump)
        return u

    if kind == "ramp":
        slope = float(params.pop("slope", 1.0 / m))
        base = float(params.pop("base", 0.0))
        _reject_unknown(kind, params)
        return base + slope * t

    raise ParameterError(f"unknown 1-D kind {kind!r}")


def make_2d(kind, rows, cols, **params):
    """Binary-valued 2-D test images of shape ``(rows, cols)``.

    kinds:
      stripes          -- axis-aligned, ``orientation`` in
                          {vertical, horizontal}, ``thickness``/``spacing``
      diagonal_stripes -- oblique bands at ``angle`` degrees (0 < angle < 180,
                          measured from the column axis), ``thickness``/``spacing``
      rectangle        -- filled axis-aligned box, ``center`` and ``size``
      circle           -- filled disc, pixel centers within ``radius`` of
                          ``center``

    All pixels take values in ``{0, value}``.
    """
    if rows < 4 or cols < 4:
        raise ParameterError("image dimensions must be >= 4")
    value = float(params.pop("value", 1.0))
    i = np.arange(rows, dtype=np.float64)[:, None]
    j = np.arange(cols, dtype=np.float64)[None, :]

    if kind == "stripes":
        orientation = params.pop("orientation", "vertical")
        thickness = int(params.pop("thickness", 2))
        spacing = int(params.pop("spacing", thickness))
        phase = int(params.pop("phase", 0))
        _reject_unknown(kind, params)
        if thickness < 1 or spacing < 1:
            raise ParameterError("thickness and spacing must be >= 1")
        period = thickness + spacing
        if orientation == "vertical":
            coord = j
        elif orientation == "horizontal":
            coord = i
        else:
            raise ParameterError(f"unknown orientation {orientation!r}")
        mask = np.broadcast_to((coord + phase) % period < thickness, (rows, cols))
        return np.where(mask, value, 0.0)

    if kind == "diagonal_stripes":
        angle = float(params.pop("angle", 45.0))
        thickness = int(params.pop("thickness", 2))
        spacing = int(params.pop("spacing", thickness))
        phase = int(params.pop("phase", 0))
        _reject_unknown(kind, params)
        if thickness < 1 or spacing < 1:
            raise ParameterError("thickness and spacing must be >= 1")
        if not 0 < angle < 180:
            raise ParameterError("angle must lie in (0, 180) degrees")
        period = thickness + spacing
        # distance along the stripe normal, quantised to pixel steps; the
        # two canonical diagonals use the exact integer lattice coordinate
        if angle == 45.0:
            coord = (i + j).astype(np.int64)
        elif angle == 135.0:
            coord = (i - j).astype(np.int64)
        else:
            theta = np.deg2rad(angle)
            coord = np.round(i * np.sin(theta) + j * np.cos(theta)).astype(np.int64)
        mask = (coord + phase) % period < thickness
        return np.where(mask, value, 0.0)

    if kind == "rectangle":
        center = params.pop("center", (rows // 2, cols // 2))
        size = params.pop("size", (rows // 2, cols // 2))
        _reject_unknown(kind, params)
        ci, cj = float(center[0]), float(center[1])
        si, sj = int(size[0]), int(size[1])
        if si < 1 or sj < 1:
            raise ParameterError("rectangle size must be >= 1")
        mask = (np.abs(i - ci) <= si / 2.0) & (np.abs(j - cj) <= sj / 2.0)
        if not mask.any():
            raise ParameterError("rectangle does not cover any pixel")
        return np.where(mask, value, 0.0)

    if kind == "circle":
        center = params.pop("center", (rows // 2, cols // 2))
        radius = float(params.pop("radius", min(rows, cols) / 4.0))
        _reject_unknown(kind, params)
        if radius <= 0:
            raise ParameterError("circle radius must be > 0")
        ci, cj = float(center[0]), float(center[1])
        # pixel included iff its center lies within the radius
        mask = (i - ci) ** 2 + (j - cj) ** 2 <= radius**2
        if not mask.any():
            raise ParameterError("circle does not cover any pixel")
        return np.where(mask, value, 0.0)

    raise ParameterError(f"unknown 2-D kind {kind!r}")


def add_noise(u, spec):
    """Add seeded i.i.d. Gaussian noise; deterministic per (seed, shape)."""
    u = as_signal(u)
    if spec.sigma == 0.0:
        return u.copy()
    eps = rng.gaussian(spec.seed, u.size).reshape(u.shape)
    return u + spec.sigma * eps


def _reject_unknown(kind, params):
    if params:
        raise ParameterError(
            f"unknown parameter(s) for kind {kind!r}: {', '.join(sorted(params))}"
        )
