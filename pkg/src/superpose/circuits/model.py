"""Layered boolean circuits with fan-in at most two, and their exact evaluator."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..features import BooleanVector, DimensionError

ARITY = {"AND": 2, "OR": 2, "XOR": 2, "NOT": 1, "COPY": 1, "CONST0": 0, "CONST1": 0}
OPS = tuple(ARITY)


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    op: str
    inputs: tuple[int, ...] = ()

    def __post_init__(self):
        if self.op not in ARITY:
            raise CircuitError(f"unknown gate {self.op!r}")
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))
        if len(self.inputs) != ARITY[self.op]:
            raise CircuitError(f"{self.op} takes {ARITY[self.op]} inputs, got {len(self.inputs)}")

    def apply(self, *vals):
        """Evaluate on numpy bool arrays (or python bools)."""
        if self.op == "AND":
            return np.logical_and(*vals)
        if self.op == "OR":
            return np.logical_or(*vals)
        if self.op == "XOR":
            return np.logical_xor(*vals)
        if self.op == "NOT":
            return np.logical_not(vals[0])
        if self.op == "COPY":
            return np.asarray(vals[0], dtype=bool)
        return self.op == "CONST1"


@dataclass(frozen=True)
class BooleanCircuit:
    """``layers[l][j]`` is the gate producing wire j of layer l+1 from layer l."""

    width: int
    layers: tuple[tuple[Gate, ...], ...]

    def __post_init__(self):
        layers = tuple(tuple(row) for row in self.layers)
        object.__setattr__(self, "layers", layers)
        for l, row in enumerate(layers):
            if len(row) != self.width:
                raise CircuitError(f"layer {l + 1} has {len(row)} gates, expected width {self.width}")
            for j, g in enumerate(row):
                for i in g.inputs:
                    if not 0 <= i < self.width:
                        raise CircuitError(f"layer {l + 1}, wire {j}: input w{i} out of range")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @classmethod
    def identity(cls, width: int, depth: int) -> "BooleanCircuit":
        row = tuple(Gate("COPY", (j,)) for j in range(width))
        return cls(width, (row,) * depth)

    def digest(self) -> str:
        from .dsl import format_circuit
        return hashlib.sha256(format_circuit(self).encode()).hexdigest()[:16]

    def layer_pairs(self, l: int) -> list[tuple[int, int]]:
        """Distinct sorted input pairs of the binary gates in layer l (0-based)."""
        pairs = {tuple(sorted(g.inputs)) for g in self.layers[l] if len(g.inputs) == 2 and g.inputs[0] != g.inputs[1]}
        return sorted(pairs)


def eval_layer(row, bits: np.ndarray) -> np.ndarray:
    out = np.empty(bits.shape[:-1] + (len(row),), dtype=bool)
    for j, g in enumerate(row):
        out[..., j] = g.apply(*(bits[..., i] for i in g.inputs))
    return out


def eval_dense(c: BooleanCircuit, bits, trace: bool = False):
    """Evaluate on a (n, width) 0/1 array; with ``trace`` return every layer (input first)."""
    x = np.asarray(bits).astype(bool)
    if x.shape[-1] != c.width:
        raise DimensionError(f"circuit width {c.width}, input width {x.shape[-1]}")
    layers = [x]
    for row in c.layers:
        x = eval_layer(row, x)
        layers.append(x)
    return layers if trace else x


def eval_circuit(c: BooleanCircuit, b: BooleanVector) -> BooleanVector:
    if b.length != c.width:
        raise DimensionError(f"circuit width {c.width}, input length {b.length}")
    return BooleanVector.from_dense(eval_dense(c, b.dense()))


def check_sparsity(c: BooleanCircuit, b: BooleanVector, s: int) -> tuple[bool, list[int]]:
    """Whether the input and every layer have at most s active wires; per-layer counts."""
    if b.length != c.width:
        raise DimensionError(f"circuit width {c.width}, input length {b.length}")
    counts = [int(v.sum()) for v in eval_dense(c, b.dense(), trace=True)]
    return all(n <= s for n in counts), counts


def layer_active_counts(c: BooleanCircuit, bits: np.ndarray) -> np.ndarray:
    """(n, depth+1) active counts for a batch of inputs."""
    return np.stack([v.sum(axis=-1) for v in eval_dense(c, bits, trace=True)], axis=-1)


def cone(c: BooleanCircuit, wire: int, upto: int | None = None) -> list[int]:
    """Input wires the given output wire (after ``upto`` layers) depends on."""
    need = {wire}
    for row in reversed(c.layers[: c.depth if upto is None else upto]):
        need = {i for j in need for i in row[j].inputs}
    return sorted(need)

