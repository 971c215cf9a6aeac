"""Bit-exact serialisation of signals, filter banks and trajectories.

Formats (all little-endian where binary, documented byte-for-byte in the
repository README):

* ``csv``  -- 1-D signals, one ``%.17g`` decimal per line; lossless for
  float64 because 17 significant digits round-trip.
* ``pgm``  -- 2-D signals as binary PGM (``P5``), maxval 65535, sample
  value ``round(clip(v, 0, 1) * 65535)`` stored big-endian per the PGM
  standard; reading divides by the file's maxval.  Exact for values on
  that 16-bit grid.
* ``f64``  -- magic ``QSG1``, rows and cols as uint64, then row-major
  float64 payload; lossless round trip.
* banks    -- text header ``K p q`` then one ``%.17g`` entry per line in
  row-major order.
* trajectories -- magic ``QTRJ``, layout in :func:`write_trajectory`.

Readers never crash on malformed input; they raise :class:`FormatError`
with a location.
"""

import json
import os
import struct
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import as_bank, as_signal, bank_constraint_errors
from .errors import ConfigError, FormatError
from .learning import HuberPolicy, LearnConfig, Trajectory, TrajectoryRecord
from .solvers import PDConfig

_FMT = "%.17g"


def _atomic_write(path, data):
    tmp = f"{path}.tmp.{os.getpid()}"
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# signals
# ---------------------------------------------------------------------------

def detect_signal_format(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".csv":
        return "csv"
    if ext == ".pgm":
        return "pgm"
    if ext in (".f64", ".bin"):
        return "f64"
    raise FormatError(f"cannot infer signal format from extension {ext!r}", path=path)


def write_signal(path, u, format=None):
    fmt = format or detect_signal_format(path)
    u = as_signal(u)
    if fmt == "csv":
        if u.shape[1] != 1:
            raise FormatError("csv stores 1-D signals only", path=path)
        _atomic_write(path, "".join(_FMT % v + "\n" for v in u[:, 0]))
    elif fmt == "pgm":
        samples = np.round(np.clip(u, 0.0, 1.0) * 65535.0).astype(">u2")
        header = f"P5\n{u.shape[1]} {u.shape[0]}\n65535\n".encode("ascii")
        _atomic_write(path, header + samples.tobytes())
    elif fmt == "f64":
        head = b"QSG1" + struct.pack("<QQ", u.shape[0], u.shape[1])
        _atomic_write(path, head + u.astype("<f8").tobytes())
    else:
        raise FormatError(f"unknown signal format {fmt!r}", path=path)


def read_signal(path, format=None):
    fmt = format or detect_signal_format(path)
    if fmt == "csv":
        return _read_csv(path)
    if fmt == "pgm":
        return _read_pgm(path)
    if fmt == "f64":
        return _read_f64(path)
    raise FormatError(f"unknown signal format {fmt!r}", path=path)


def _read_csv(path):
    values = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    values.append(float(line))
                except ValueError:
                    raise FormatError(
                        f"not a number: {line!r}", path=path, line=lineno
                    ) from None
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc}", path=path) from None
    if not values:
        raise FormatError("empty signal file", path=path)
    arr = np.array(values)[:, None]
    if not np.all(np.isfinite(arr)):
        raise FormatError("signal contains non-finite values", path=path)
    return arr


def _read_pgm(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc}", path=path) from None

    # header: magic, width, height, maxval as whitespace/comment separated tokens
    pos = 0
    tokens = []
    while len(tokens) < 4:
        if pos >= len(blob):
            raise FormatError("truncated header", path=path, offset=pos)
        ch = blob[pos:pos + 1]
        if ch == b"#":
            pos = blob.find(b"\n", pos)
            if pos < 0:
                raise FormatError("unterminated comment", path=path)
            pos += 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(blob) and not blob[end:end + 1].isspace():
                end += 1
            tokens.append(blob[pos:end])
            pos = end
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"not a PGM file (magic {magic!r})", path=path, offset=0)
    try:
        cols, rows, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise FormatError("non-numeric header field", path=path) from None
    if rows < 1 or cols < 1 or not 0 < maxval < 65536:
        raise FormatError(
            f"bad dimensions or maxval: {rows}x{cols}, maxval {maxval}", path=path
        )

    if magic == b"P2":
        raw = blob[pos:].split()
        if len(raw) != rows * cols:
            raise FormatError(
                f"expected {rows * cols} samples, found {len(raw)}", path=path
            )
        try:
            data = np.array([int(t) for t in raw], dtype=np.float64)
        except ValueError:
            raise FormatError("non-numeric sample", path=path) from None
    else:
        pos += 1  # single whitespace byte after maxval
        width = 2 if maxval > 255 else 1
        need = rows * cols * width
        payload = blob[pos:pos + need]
        if len(payload) < need:
            raise FormatError(
                f"truncated payload: expected {need} bytes, found {len(payload)}",
                path=path,
                offset=pos,
            )
        dtype = ">u2" if width == 2 else "u1"
        data = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if np.any(data < 0) or np.any(data > maxval):
        raise FormatError("sample out of range", path=path)
    return (data / maxval).reshape(rows, cols)


def _read_f64(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc}", path=path) from None
    if len(blob) < 20 or blob[:4] != b"QSG1":
        raise FormatError("not an f64 signal file", path=path, offset=0)
    rows, cols = struct.unpack("<QQ", blob[4:20])
    need = 20 + rows * cols * 8
    if rows < 1 or cols < 1 or len(blob) != need:
        raise FormatError(
            f"payload size mismatch: expected {need} bytes, found {len(blob)}",
            path=path,
            offset=20,
        )
    data = np.frombuffer(blob[20:], dtype="<f8").reshape(rows, cols)
    if not np.all(np.isfinite(data)):
        raise FormatError("signal contains non-finite values", path=path)
    return data.copy()


# ---------------------------------------------------------------------------
# filter banks
# ---------------------------------------------------------------------------

def write_bank(path, bank):
    bank = as_bank(bank)
    k, p, q = bank.shape
    lines = [f"{k} {p} {q}"]
    lines += [_FMT % v for v in bank.ravel()]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_bank(path, constraint_warning=True):
    """Load a filter bank; warns (never rejects) on constraint violations,
    since unnormalised intermediates are also stored in this format."""
    try:
        with open(path) as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc}", path=path) from None
    if not lines or not lines[0].strip():
        raise FormatError("missing header", path=path, line=1)
    try:
        k, p, q = (int(t) for t in lines[0].split())
    except ValueError:
        raise FormatError(
            f"header must be 'K p q', got {lines[0]!r}", path=path, line=1
        ) from None
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise FormatError(f"not a number: {line!r}", path=path, line=lineno) from None
    if len(values) != k * p * q:
        raise FormatError(
            f"header promises {k * p * q} entries, payload has {len(values)}",
            path=path,
        )
    bank = as_bank(np.array(values).reshape(k, p, q))
    if constraint_warning:
        norm_err, mean_err = bank_constraint_errors(bank)
        if norm_err > 1e-12 or mean_err > 1e-12:
            warnings.warn(
                f"bank in {path} violates constraints "
                f"(norm error {norm_err:.2e}, mean error {mean_err:.2e})",
                stacklevel=2,
            )
    return bank


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def write_trajectory(path, traj):
    """Binary trajectory dump, self-contained for certification.

    Layout: magic ``QTRJ``, version u32, then ``k p q n_iters n_negatives
    seed`` as int64, ``neg_sq_norm_sum`` and ``final_mu`` as f64, a u8
    mode flag (0 standard, 1 infimal), the final bank, and per iteration
    the six scalars ``mu mu_half g_half gamma residual inner_iterations``
    followed by the four bank-shaped arrays ``h h_half s grad_g_half``.
    All payload numbers little-endian float64.
    """
    k, p, q = traj.final_bank.shape
    head = b"QTRJ" + struct.pack(
        "<IqqqqqqddB",
        1,
        k,
        p,
        q,
        len(traj.records),
        traj.n_negatives,
        traj.seed,
        traj.neg_sq_norm_sum,
        traj.final_mu,
        1 if traj.mode == "infimal" else 0,
    )
    chunks = [head, traj.final_bank.astype("<f8").tobytes()]
    for rec in traj.records:
        chunks.append(
            np.array(
                [rec.mu, rec.mu_half, rec.g_half, rec.gamma, rec.residual,
                 float(rec.inner_iterations)],
                dtype="<f8",
            ).tobytes()
        )
        for arr in (rec.h, rec.h_half, rec.s, rec.grad_g_half):
            chunks.append(arr.astype("<f8").tobytes())
    _atomic_write(path, b"".join(chunks))


def read_trajectory(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc}", path=path) from None
    head_size = 4 + struct.calcsize("<IqqqqqqddB")
    if len(blob) < head_size or blob[:4] != b"QTRJ":
        raise FormatError("not a trajectory file", path=path, offset=0)
    (version, k, p, q, n_iters, n_neg, seed, neg_sq, final_mu, mode_flag) = (
        struct.unpack("<IqqqqqqddB", blob[4:head_size])
    )
    if version != 1:
        raise FormatError(f"unsupported version {version}", path=path)
    if min(k, p, q) < 1 or n_iters < 0 or n_neg < 1:
        raise FormatError("implausible header fields", path=path)
    bank_n = k * p * q
    need = head_size + 8 * (bank_n + n_iters * (6 + 4 * bank_n))
    if len(blob) != need:
        raise FormatError(
            f"payload size mismatch: expected {need} bytes, found {len(blob)}",
            path=path,
        )
    off = head_size

    def take(n):
        nonlocal off
        out = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
        off += 8 * n
        return out

    final_bank = take(bank_n).reshape(k, p, q).copy()
    records = []
    for _ in range(n_iters):
        scalars = take(6)
        arrays = [take(bank_n).reshape(k, p, q).copy() for _ in range(4)]
        records.append(
            TrajectoryRecord(
                h=arrays[0],
                h_half=arrays[1],
                mu=scalars[0],
                mu_half=scalars[1],
                g_half=scalars[2],
                gamma=scalars[3],
                s=arrays[2],
                grad_g_half=arrays[3],
                residual=scalars[4],
                inner_iterations=int(scalars[5]),
            )
        )
    return Trajectory(
        records=records,
        final_bank=final_bank,
        final_mu=final_mu,
        seed=seed,
        n_negatives=n_neg,
        neg_sq_norm_sum=neg_sq,
        mode="infimal" if mode_flag else "standard",
    )


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ReconstructSpec:
    eta: float = 1.0
    sigma: float = 0.0
    noise_seed: int = 0
    target: Optional[dict] = None  # signal spec; defaults to first positive
    bank_file: Optional[str] = None  # reconstruct with a stored bank


@dataclass
class ExperimentConfig:
    """Fully resolved description of one experiment run."""

    kernel_shape: tuple
    k: int
    mode: str
    positives: list  # signal specs (dicts)
    negatives: list
    learn: LearnConfig
    reconstruct: Optional[ReconstructSpec] = None
    base_dir: str = "."
    name: str = "experiment"


_LEARN_KEYS = {"restarts", "outer_max", "outer_tol", "seed", "inner", "huber", "jobs"}
_INNER_KEYS = {"max_iters", "gap_tol", "check_every"}
_HUBER_KEYS = {"policy", "factor", "floor", "gamma"}
_RECON_KEYS = {"eta", "sigma", "sigma_sq", "noise_seed", "target", "bank_file"}
_TOP_KEYS = {"name", "kernel", "mode", "positives", "negatives", "learn", "reconstruct"}
_KERNEL_KEYS = {"rows", "cols", "count"}
_SIGNAL_KEYS = {"file", "format", "generate", "noise", "scale"}
_NOISE_KEYS = {"sigma", "sigma_sq", "seed"}


def _require_keys(section, mapping, allowed):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {section}: {', '.join(sorted(unknown))}"
        )


def _check_signal_spec(section, spec, base_dir):
    if not isinstance(spec, dict):
        raise ConfigError(f"{section} must be an object")
    _require_keys(section, spec, _SIGNAL_KEYS)
    has_file = "file" in spec
    has_gen = "generate" in spec
    if has_file == has_gen:
        raise ConfigError(f"{section} needs exactly one of 'file' or 'generate'")
    if has_file:
        path = os.path.join(base_dir, spec["file"])
        if not os.path.exists(path):
            raise ConfigError(f"{section} references missing file {path}")
    if "noise" in spec:
        _require_keys(f"{section}.noise", spec["noise"], _NOISE_KEYS)


def load_config(path):
    """Parse and validate an experiment config; defaults filled, unknown
    keys rejected, referenced files checked for existence."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _require_keys("config", raw, _TOP_KEYS)

    base_dir = os.path.dirname(os.path.abspath(path))

    kernel = raw.get("kernel")
    if not isinstance(kernel, dict):
        raise ConfigError("config needs a 'kernel' object")
    _require_keys("kernel", kernel, _KERNEL_KEYS)
    try:
        kernel_shape = (int(kernel["rows"]), int(kernel.get("cols", 1)))
    except (KeyError, TypeError, ValueError):
        raise ConfigError("kernel.rows (and optional cols) must be integers") from None
    k = int(kernel.get("count", 1))

    mode = raw.get("mode", "standard")
    if mode not in ("standard", "infimal"):
        raise ConfigError(f"unknown mode {mode!r}")

    positives = raw.get("positives")
    negatives = raw.get("negatives")
    if not isinstance(positives, list) or not positives:
        raise ConfigError("config needs a nonempty 'positives' list")
    if not isinstance(negatives, list) or not negatives:
        raise ConfigError("config needs a nonempty 'negatives' list")
    for idx, spec in enumerate(positives):
        _check_signal_spec(f"positives[{idx}]", spec, base_dir)
    for idx, spec in enumerate(negatives):
        _check_signal_spec(f"negatives[{idx}]", spec, base_dir)
    if mode == "infimal" and len(positives) != k:
        raise ConfigError(
            f"infimal mode needs kernel.count == len(positives); "
            f"got {k} filters and {len(positives)} parts"
        )

    learn_raw = raw.get("learn", {})
    if not isinstance(learn_raw, dict):
        raise ConfigError("'learn' must be an object")
    _require_keys("learn", learn_raw, _LEARN_KEYS)
    inner_raw = learn_raw.get("inner", {})
    _require_keys("learn.inner", inner_raw, _INNER_KEYS)
    huber_raw = learn_raw.get("huber", {})
    _require_keys("learn.huber", huber_raw, _HUBER_KEYS)
    try:
        inner = PDConfig(
            max_iters=int(inner_raw.get("max_iters", 5000)),
            gap_tol=float(inner_raw.get("gap_tol", 1e-8)),
            check_every=int(inner_raw.get("check_every", 10)),
        )
        huber = HuberPolicy(
            kind=huber_raw.get("policy", "relative"),
            factor=float(huber_raw.get("factor", 1e-3)),
            floor=float(huber_raw.get("floor", 1e-8)),
            gamma=float(huber_raw.get("gamma", 1e-3)),
        )
        learn = LearnConfig(
            restarts=int(learn_raw.get("restarts", 100)),
            outer_max=int(learn_raw.get("outer_max", 100)),
            outer_tol=float(learn_raw.get("outer_tol", 1e-8)),
            seed=int(learn_raw.get("seed", 0)),
            inner=inner,
            huber=huber,
            jobs=int(learn_raw.get("jobs", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad learn settings: {exc}") from None

    recon = None
    if "reconstruct" in raw:
        rraw = raw["reconstruct"]
        _require_keys("reconstruct", rraw, _RECON_KEYS)
        if "sigma" in rraw and "sigma_sq" in rraw:
            raise ConfigError("give reconstruct.sigma or sigma_sq, not both")
        sigma = float(rraw.get("sigma", 0.0))
        if "sigma_sq" in rraw:
            sigma = float(np.sqrt(float(rraw["sigma_sq"])))
        if "target" in rraw:
            _check_signal_spec("reconstruct.target", rraw["target"], base_dir)
        bank_file = rraw.get("bank_file")
        if bank_file is not None:
            bank_path = os.path.join(base_dir, bank_file)
            if not os.path.exists(bank_path):
                raise ConfigError(f"reconstruct.bank_file missing: {bank_path}")
        try:
            recon = ReconstructSpec(
                eta=float(rraw.get("eta", 1.0)),
                sigma=sigma,
                noise_seed=int(rraw.get("noise_seed", 0)),
                target=rraw.get("target"),
                bank_file=bank_file,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad reconstruct settings: {exc}") from None

    return ExperimentConfig(
        kernel_shape=kernel_shape,
        k=k,
        mode=mode,
        positives=positives,
        negatives=negatives,
        learn=learn,
        reconstruct=recon,
        base_dir=base_dir,
        name=str(raw.get("name", os.path.splitext(os.path.basename(path))[0])),
    )


def realize_signal(spec, base_dir="."):
    """Materialise a config signal spec into an array."""
    from .synth import NoiseSpec, add_noise, make_1d, make_2d

    if "file" in spec:
        u = read_signal(os.path.join(base_dir, spec["file"]), format=spec.get("format"))
    else:
        gen = dict(spec["generate"])
        kind = gen.pop("kind", None)
        if kind is None:
            raise ConfigError("generate block needs a 'kind'")
        try:
            if "rows" in gen:
                rows = int(gen.pop("rows"))
                cols = int(gen.pop("cols"))
                u = make_2d(kind, rows, cols, **_tupled(gen))
            else:
                m = int(gen.pop("m"))
                u = make_1d(kind, m, **_tupled(gen))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad generate block: {exc}") from None
    u = as_signal(u)
    if "scale" in spec:
        u = u * float(spec["scale"])
    if "noise" in spec:
        nraw = spec["noise"]
        sigma = float(nraw.get("sigma", 0.0))
        if "sigma_sq" in nraw:
            sigma = float(np.sqrt(float(nraw["sigma_sq"])))
        u = add_noise(u, NoiseSpec(sigma=sigma, seed=int(nraw.get("seed", 0))))
    return u


def _tupled(params):
    # JSON has no tuples; lists in parameter positions become tuples
    return {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
