"""Feature dictionaries, encodings of sparse boolean vectors, and read-off checks.

Feature and neuron indices are 0-based throughout the library.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tensor import PreconditionError, RngStream, sample_gaussian_matrix


class DimensionError(ValueError):
    pass


class DegenerateSamplesError(ValueError):
    """Weak-linearity check needs both positive and negative samples."""


@dataclass(frozen=True, order=True)
class BooleanVector:
    length: int
    active: tuple[int, ...] = ()

    def __post_init__(self):
        act = tuple(sorted(set(int(i) for i in self.active)))
        if len(act) != len(self.active):
            raise PreconditionError("duplicate active indices")
        if act and (act[0] < 0 or act[-1] >= self.length):
            raise PreconditionError(f"active index out of range for length {self.length}")
        object.__setattr__(self, "active", act)

    @classmethod
    def from_dense(cls, bits) -> "BooleanVector":
        bits = np.asarray(bits)
        return cls(len(bits), tuple(np.flatnonzero(bits != 0).tolist()))

    @property
    def sparsity(self) -> int:
        return len(self.active)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        out[list(self.active)] = 1.0
        return out

    def __getitem__(self, k: int) -> int:
        return int(k in self.active)


def stack_dense(vectors: Sequence[BooleanVector]) -> np.ndarray:
    """(n, m) 0/1 matrix for a batch of boolean vectors."""
    if not vectors:
        return np.zeros((0, 0))
    m = vectors[0].length
    out = np.zeros((len(vectors), m))
    for row, b in enumerate(vectors):
        if b.length != m:
            raise DimensionError("boolean vectors of mixed length")
        out[row, list(b.active)] = 1.0
    return out


def coherence(phi: np.ndarray) -> float:
    """max over k != l of |phi_k . phi_l| (0 when there is a single column)."""
    m = phi.shape[1]
    if m < 2:
        return 0.0
    g = phi.T @ phi
    np.fill_diagonal(g, 0.0)
    return float(np.abs(g).max())


@dataclass
class FeatureDictionary:
    phi: np.ndarray
    kind: str = "custom"
    seed: int | None = None
    mu: float = field(init=False)
    norm_deviation: float = field(init=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        if self.phi.ndim != 2:
            raise DimensionError("dictionary must be a d x m matrix")
        self.mu = coherence(self.phi)
        self.norm_deviation = float(np.abs(np.linalg.norm(self.phi, axis=0) - 1.0).max(initial=0.0))

    @property
    def d(self) -> int:
        return self.phi.shape[0]

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    def readoff(self) -> "ReadoffMatrix":
        """Features read themselves off: R = Phi^T."""
        return ReadoffMatrix(self.phi.T.copy())

    def encode(self, b: BooleanVector) -> np.ndarray:
        return encode(self, b)

    def encode_batch(self, bits: np.ndarray) -> np.ndarray:
        """bits (n, m) -> activations (n, d)."""
        bits = np.asarray(bits, dtype=np.float64)
        if bits.shape[-1] != self.m:
            raise DimensionError(f"expected {self.m} features, got {bits.shape[-1]}")
        return bits @ self.phi.T

    def sidecar(self) -> dict:
        return {"m": self.m, "d": self.d, "seed": self.seed, "kind": self.kind, "coherence": self.mu}


def identity_dictionary(m: int) -> FeatureDictionary:
    return FeatureDictionary(np.eye(m), kind="identity")


def random_unit_dictionary(m: int, d: int, rng: RngStream, orthonormal: bool = False) -> FeatureDictionary:
    """Gaussian N(0, 1/d) columns scaled to unit length.

    With ``orthonormal=True`` (requires m <= d) the columns are orthonormalized
    by QR instead, giving zero coherence.
    """
    if m < 1 or d < 1:
        raise PreconditionError("m and d must be positive")
    g = sample_gaussian_matrix(d, m, 1.0 / d, rng)
    if orthonormal:
        if m > d:
            raise PreconditionError("orthonormal dictionary needs m <= d")
        q, r = np.linalg.qr(g)
        phi = q * np.sign(np.diag(r))
        kind = "orthonormal"
    else:
        phi = g / np.linalg.norm(g, axis=0)
        kind = "gaussian-unit"
    return FeatureDictionary(phi, kind=kind, seed=rng.seed)


def encode(dictionary: FeatureDictionary, b: BooleanVector) -> np.ndarray:
    if b.length != dictionary.m:
        raise DimensionError(f"boolean vector of length {b.length} for a dictionary of {dictionary.m} features")
    return dictionary.phi[:, list(b.active)].sum(axis=1)


@dataclass
class ReadoffMatrix:
    matrix: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=np.float64))
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
            if self.bias.shape[0] != self.matrix.shape[0]:
                raise DimensionError("bias length must match read-off row count")

    @property
    def n_features(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def apply(self, acts: np.ndarray) -> np.ndarray:
        acts = np.asarray(acts, dtype=np.float64)
        if acts.shape[-1] != self.d:
            raise DimensionError(f"activation width {acts.shape[-1]} != read-off width {self.d}")
        out = acts @ self.matrix.T
        if self.bias is not None:
            out = out + self.bias
        return out

    def rows(self, idx) -> "ReadoffMatrix":
        idx = np.asarray(idx, dtype=int)
        return ReadoffMatrix(self.matrix[idx], None if self.bias is None else self.bias[idx])


PERCENTILES = (50, 90, 99, 100)


@dataclass
class EpsReport:
    per_feature_max: np.ndarray
    eps: float
    mean: float
    percentiles: dict
    n_samples: int
    mode: str = "monte-carlo"

    @classmethod
    def from_errors(cls, errors: np.ndarray, mode: str = "monte-carlo") -> "EpsReport":
        """errors: (n_samples, n_features) absolute read-off errors."""
        errors = np.atleast_2d(np.asarray(errors, dtype=np.float64))
        n, k = errors.shape
        if n == 0:
            return cls(np.zeros(k), 0.0, 0.0, {q: 0.0 for q in PERCENTILES}, 0, mode)
        per = errors.max(axis=0)
        pct = {q: float(np.percentile(errors, q)) for q in PERCENTILES}
        return cls(per, float(per.max(initial=0.0)), float(errors.mean()), pct, n, mode)

    def summary(self) -> dict:
        out = {"eps": self.eps, "eps_mean": self.mean, "n_samples": self.n_samples, "mode": self.mode}
        out.update({f"eps_p{q}": v for q, v in self.percentiles.items()})
        return out


def readoff_errors(acts: np.ndarray, targets: np.ndarray, R: ReadoffMatrix) -> np.ndarray:
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    values = R.apply(np.atleast_2d(acts))
    if values.shape != targets.shape:
        raise DimensionError(f"read-off shape {values.shape} != target shape {targets.shape}")
    return np.abs(values - targets)


def _split_pairs(samples):
    acts = np.array([np.asarray(a, dtype=np.float64) for a, _ in samples])
    targets = [t for _, t in samples]
    if targets and isinstance(targets[0], BooleanVector):
        targets = stack_dense(targets)
    return acts, np.asarray(targets, dtype=np.float64)


def verify_eps_linear(samples, R: ReadoffMatrix, mode: str = "monte-carlo") -> EpsReport:
    """Read-off error statistics for ``(activation, target)`` pairs.

    ``samples`` is either a list of pairs (targets as :class:`BooleanVector`
    or 0/1 arrays) or a tuple ``(acts, targets)`` of stacked arrays.
    """
    if isinstance(samples, tuple) and len(samples) == 2 and isinstance(samples[0], np.ndarray):
        acts, targets = samples
    else:
        acts, targets = _split_pairs(samples)
    return EpsReport.from_errors(readoff_errors(acts, targets, R), mode)


def verify_weak_linear(samples: Iterable, r: np.ndarray) -> tuple[bool, float]:
    """Hyperplane separability along ``r``; returns (separated, margin)."""
    proj_pos, proj_neg = [], []
    r = np.asarray(r, dtype=np.float64)
    for a, bit in samples:
        (proj_pos if bit else proj_neg).append(float(np.dot(r, a)))
    if not proj_pos or not proj_neg:
        raise DegenerateSamplesError("need at least one positive and one negative sample")
    margin = min(proj_pos) - max(proj_neg)
    return margin > 0, margin


def verify_relu_linear(samples, R: ReadoffMatrix) -> float:
    """Mean over samples of ||F(x) - ReLU(R a(x))||_2."""
    if isinstance(samples, tuple) and len(samples) == 2 and isinstance(samples[0], np.ndarray):
        acts, targets = samples
    else:
        acts, targets = _split_pairs(samples)
    values = np.maximum(R.apply(np.atleast_2d(acts)), 0.0)
    targets = np.atleast_2d(targets)
    if values.shape != targets.shape:
        raise DimensionError(f"read-off shape {values.shape} != target shape {targets.shape}")
    return float(np.linalg.norm(targets - values, axis=1).mean())
