"""Sparse boolean input samplers: exhaustive, uniform over s-supports, and targeted."""

from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np

from ..features import BooleanVector
from ..tensor import PreconditionError, RngStream

EXHAUSTIVE_LIMIT = 2_000_000
MODES = ("exhaustive", "monte-carlo", "targeted")


class ExhaustiveGuardError(PreconditionError):
    pass


def check_exhaustive(m: int, s: int) -> int:
    """Number of vectors with at most s active; raises when C(m, s) exceeds the limit."""
    if comb(m, s) > EXHAUSTIVE_LIMIT:
        raise ExhaustiveGuardError(f"C({m}, {s}) = {comb(m, s)} exceeds {EXHAUSTIVE_LIMIT}")
    return sum(comb(m, k) for k in range(s + 1))


def exhaustive_supports(m: int, s: int):
    for k in range(s + 1):
        yield from combinations(range(m), k)


def exhaustive_bits(m: int, s: int) -> np.ndarray:
    """(N, m) bool array of every vector with at most s active features."""
    n = check_exhaustive(m, s)
    out = np.zeros((n, m), dtype=bool)
    row = 0
    for k in range(s + 1):
        for support in combinations(range(m), k):
            out[row, list(support)] = True
            row += 1
    return out


def random_supports(m: int, k: int, count: int, gen, exclude=()) -> np.ndarray:
    """(count, k) sorted supports, uniform over k-subsets of range(m) minus ``exclude``."""
    pool = np.setdiff1d(np.arange(m), np.asarray(exclude, dtype=np.intp))
    if k > pool.size:
        raise PreconditionError(f"cannot draw {k} of {pool.size} features")
    if k == 0:
        return np.zeros((count, 0), dtype=np.intp)
    keys = gen.random((count, pool.size))
    idx = np.argpartition(keys, k - 1, axis=1)[:, :k] if k < pool.size else np.tile(np.arange(k), (count, 1))
    return np.sort(pool[idx], axis=1)


def targeted_supports(m: int, s: int, count: int, gen, forced) -> np.ndarray:
    """Forced features first, then s - len(forced) uniform others."""
    forced = tuple(int(k) for k in forced)
    if len(forced) > s:
        raise PreconditionError("more forced features than the sparsity allows")
    rest = random_supports(m, s - len(forced), count, gen, exclude=forced)
    return np.hstack([np.tile(np.array(forced, dtype=np.intp), (count, 1)), rest])


def supports_to_bits(supports: np.ndarray, m: int) -> np.ndarray:
    bits = np.zeros((len(supports), m), dtype=bool)
    if supports.size:
        np.put_along_axis(bits, supports, True, axis=1)
    return bits


def sample_sparse_inputs(m: int, s: int, count: int = 0, mode: str = "monte-carlo",
                         rng: RngStream | None = None, target=None) -> list[BooleanVector]:
    """Sparse boolean vectors.

    exhaustive enumerates every vector with at most s active (``count`` is
    ignored); monte-carlo draws uniformly among exactly-s supports; targeted
    forces the features in ``target`` active plus uniform others up to s.
    """
    if not 0 <= s <= m:
        raise PreconditionError("need 0 <= s <= m")
    if mode == "exhaustive":
        check_exhaustive(m, s)
        return [BooleanVector(m, tuple(t)) for t in exhaustive_supports(m, s)]
    gen = (rng or RngStream(0)).generator
    if mode == "monte-carlo":
        sup = random_supports(m, s, count, gen)
    elif mode == "targeted":
        if target is None:
            raise PreconditionError("targeted sampling needs the features to force")
        sup = targeted_supports(m, s, count, gen, target)
    else:
        raise PreconditionError(f"unknown sampling mode {mode!r}; expected one of {MODES}")
    return [BooleanVector(m, tuple(int(k) for k in row)) for row in sup]
