"""Seeded sampling, the two nonlinearities, and the SBMAT matrix file format.

Random streams use numpy's Philox-4x64-10 counter-based generator.  A stream
is keyed by ``(seed, stream_id)`` packed into the 128-bit Philox key, so two
streams with different ids never share a counter sequence and a given pair
always replays the same draws.  Child streams derive their id by hashing
``(seed, stream_id, index)`` through :class:`numpy.random.SeedSequence`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

RNG_ALGORITHM = "philox4x64-10"
_MASK64 = (1 << 64) - 1


class PreconditionError(ValueError):
    """Raised when an operation is called outside its documented domain."""


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v <= _MASK64:
                raise PreconditionError(f"{name} must be a 64-bit unsigned integer, got {v}")
        key = (self.stream_id << 64) | self.seed
        object.__setattr__(self, "_gen", np.random.Generator(np.random.Philox(key=key)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream; a pure function of (seed, stream_id, index)."""
        ss = np.random.SeedSequence([self.seed, self.stream_id, int(index)])
        sid = int(ss.generate_state(1, dtype=np.uint64)[0])
        return RngStream(self.seed, sid)

    def fresh(self) -> "RngStream":
        """A copy rewound to the start of this stream."""
        return RngStream(self.seed, self.stream_id)


def as_rng(rng: RngStream | int) -> RngStream:
    return rng if isinstance(rng, RngStream) else RngStream(int(rng))


def relu(x):
    return np.maximum(x, 0.0)


def round01(x):
    """Ramp from 0 to 1 that is flat outside (1/3, 2/3).

    Equal to 3 (relu(x - 1/3) - relu(x - 2/3)); the clipped form keeps the
    flat parts exact in floating point.
    """
    return np.clip(3.0 * np.asarray(x, dtype=np.float64) - 1.0, 0.0, 1.0)


def staircase_round(x, a: int = 2):
    """Piecewise-linear rounding to the nearest integer in [-a, a].

    Exact whenever ``x`` is within 1/3 of an integer in range; built from
    ``4a`` ReLUs (see :func:`staircase_relu_terms`).
    """
    if a < 1:
        raise PreconditionError("staircase range a must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for j in range(a):
        out += round01(x - j) - round01(-x - j)
    return out if out.ndim else float(out)


def staircase_relu_terms(a: int = 2):
    """The ReLU decomposition of :func:`staircase_round`.

    Returns ``(coef, shift)`` arrays of length ``4a`` such that
    ``staircase_round(x) == sum(coef * relu(sign * x + shift))`` where the
    sign is +1 for the first ``2a`` terms and -1 for the rest.
    """
    coef, shift, sign = [], [], []
    for s in (1.0, -1.0):
        for j in range(a):
            # s * round01(s*x - j) = 3s(relu(s*x - j - 1/3) - relu(s*x - j - 2/3))
            coef += [3.0 * s, -3.0 * s]
            shift += [-j - 1.0 / 3.0, -j - 2.0 / 3.0]
            sign += [s, s]
    return np.array(coef), np.array(shift), np.array(sign)


def _check_prob(p):
    if not 0.0 <= p <= 1.0:
        raise PreconditionError(f"probability must lie in [0, 1], got {p}")


def clamp_prob(p: float) -> float:
    return min(1.0, max(0.0, float(p)))


def sample_bernoulli_matrix(rows: int, cols: int, p: float, rng: RngStream) -> np.ndarray:
    _check_prob(p)
    return (rng.generator.random((rows, cols)) < p).astype(np.float64)


def sample_ternary_matrix(rows: int, cols: int, p: float, rng: RngStream) -> np.ndarray:
    """Entries +1 and -1 with probability p/2 each, 0 otherwise."""
    _check_prob(p)
    u = rng.generator.random((rows, cols))
    out = np.zeros((rows, cols))
    out[u < p / 2] = 1.0
    out[(u >= p / 2) & (u < p)] = -1.0
    return out


def sample_gaussian_matrix(rows: int, cols: int, variance: float, rng: RngStream) -> np.ndarray:
    if not variance > 0:
        raise PreconditionError(f"variance must be positive, got {variance}")
    return rng.generator.normal(0.0, math.sqrt(variance), size=(rows, cols))


# -- SBMAT ------------------------------------------------------------------

_SBMAT_MAGIC = "SBMAT v1"


def write_sbmat(path, matrix) -> None:
    """Header line ``SBMAT v1 rows cols`` then row-major little-endian float64."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise ValueError("SBMAT stores 2-D matrices only")
    if not np.all(np.isfinite(m)):
        raise ValueError("refusing to write non-finite entries")
    header = f"{_SBMAT_MAGIC} {m.shape[0]} {m.shape[1]}\n".encode("ascii")
    Path(path).write_bytes(header + m.astype("<f8").tobytes(order="C"))


def read_sbmat(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing SBMAT header")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 4 or " ".join(parts[:2]) != _SBMAT_MAGIC:
        raise ValueError(f"{path}: bad SBMAT header {raw[:nl]!r}")
    rows, cols = int(parts[2]), int(parts[3])
    body = raw[nl + 1:]
    if len(body) != 8 * rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} entries, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(np.float64)


def matrix_to_csv(matrix) -> str:
    """Lossless CSV: every entry printed with ``repr`` (shortest round-trip form)."""
    m = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in m:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [[float(v) for v in r] for r in csv.reader(io.StringIO(text)) if r]
    return np.array(rows, dtype=np.float64)
