"""Multilinear AND-polynomials: every boolean function is a unique integer
combination of ANDs of subsets of its inputs (a Moebius transform of the
truth table)."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ..tensor import PreconditionError
from .model import BooleanCircuit, CircuitError, Gate, cone, eval_dense

MAX_FANIN = 24


class FanInExplosion(CircuitError):
    pass


@dataclass(frozen=True)
class AndPolynomial:
    """constant + sum over subsets S of coef[S] * AND_{i in S} x_i."""

    terms: dict = field(default_factory=dict)   # frozenset -> int, empty set excluded
    constant: int = 0

    def __post_init__(self):
        clean = {frozenset(k): int(v) for k, v in self.terms.items() if v != 0 and len(k) > 0}
        object.__setattr__(self, "terms", clean)

    @property
    def variables(self) -> list[int]:
        return sorted(set().union(*self.terms)) if self.terms else []

    @property
    def degree(self) -> int:
        return max((len(k) for k in self.terms), default=0)

    @property
    def l1(self) -> int:
        return abs(self.constant) + sum(abs(v) for v in self.terms.values())

    def evaluate(self, bits) -> np.ndarray:
        """bits: (..., n) 0/1 array indexed by variable id."""
        x = np.asarray(bits, dtype=np.int64)
        out = np.full(x.shape[:-1], self.constant, dtype=np.int64)
        for subset, coef in self.terms.items():
            out = out + coef * np.prod(x[..., sorted(subset)], axis=-1)
        return out

    def relabel(self, mapping) -> "AndPolynomial":
        return AndPolynomial({frozenset(mapping[i] for i in k): v for k, v in self.terms.items()}, self.constant)

    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))

    def __str__(self):
        parts = [str(self.constant)] if self.constant or not self.terms else []
        for k, v in self.sorted_terms():
            mono = "*".join(f"x{i}" for i in sorted(k))
            parts.append(f"{v:+d}*{mono}")
        return " ".join(parts)


def moebius(table: np.ndarray) -> np.ndarray:
    """Subset-sum inversion: coef[S] = sum_{T subset S} (-1)^{|S|-|T|} table[T], bitmask indexed."""
    c = np.array(table, dtype=np.int64)
    n = int(np.log2(c.size))
    if 1 << n != c.size:
        raise PreconditionError("truth table length must be a power of two")
    for i in range(n):
        c = c.reshape(-1, 2, 1 << i)
        c[:, 1, :] -= c[:, 0, :]
    return c.reshape(-1)


def truth_table_polynomial(variables, func) -> AndPolynomial:
    """Polynomial of ``func`` (maps a (2^n, n) 0/1 array to (2^n,) values) over the given variables."""
    variables = list(variables)
    n = len(variables)
    if n > MAX_FANIN:
        raise FanInExplosion(f"{n} input variables exceed the fan-in guard {MAX_FANIN}")
    masks = np.arange(1 << n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    coef = moebius(np.asarray(func(bits), dtype=np.int64))
    terms = {}
    for mask in np.flatnonzero(coef):
        if mask == 0:
            continue
        terms[frozenset(variables[i] for i in range(n) if mask >> i & 1)] = int(coef[mask])
    return AndPolynomial(terms, int(coef[0]))


def gate_polynomial(g: Gate) -> AndPolynomial:
    """Polynomial of one gate over its (distinct) input wires."""
    variables = sorted(set(g.inputs))
    pos = {v: i for i, v in enumerate(variables)}

    def func(bits):
        return g.apply(*(bits[:, pos[i]].astype(bool) for i in g.inputs)) * np.ones(len(bits), dtype=np.int64)

    return truth_table_polynomial(variables, func)


def and_decomposition(c: BooleanCircuit) -> list[AndPolynomial]:
    """One polynomial over the circuit inputs for every output wire."""
    if 2 ** c.depth > MAX_FANIN:
        raise FanInExplosion(f"depth {c.depth} allows fan-in 2^{c.depth} > {MAX_FANIN}")
    out = []
    for j in range(c.width):
        variables = cone(c, j)

        def func(bits, variables=variables, j=j):
            full = np.zeros((len(bits), c.width), dtype=bool)
            full[:, variables] = bits.astype(bool)
            return eval_dense(c, full)[:, j]

        out.append(truth_table_polynomial(variables, func))
    return out


def all_boolean_points(n: int) -> np.ndarray:
    return np.array(list(product((0, 1), repeat=n)), dtype=np.int64).reshape(-1, n)
