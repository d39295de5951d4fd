"""Circuit generators: the universal AND circuit and random sparse circuits."""

from __future__ import annotations

from itertools import combinations

import numpy as np

from ..tensor import PreconditionError, RngStream
from .model import ARITY, BooleanCircuit, CircuitError, Gate, layer_active_counts

# each gate consumes fresh wires from a random permutation (AND's second
# input excepted), so the active count can only grow through NOT and CONST1;
# the weights keep expected consumption just under one wire per gate
DEFAULT_MIX = {"AND": 0.3, "OR": 0.07, "XOR": 0.06, "COPY": 0.42, "CONST0": 0.15}

class GenerationError(CircuitError):
    pass


def uand_pairs(m: int) -> list[tuple[int, int]]:
    return list(combinations(range(m), 2))


def generate_uand_circuit(m: int) -> BooleanCircuit:
    """Depth-1 circuit whose output wire t is AND of the t-th pair (lexicographic).

    Width is max(m, C(m, 2)); surplus output wires are CONST0 and surplus
    input wires are unused.
    """
    if m < 2:
        raise PreconditionError("U-AND circuit needs m >= 2")
    pairs = uand_pairs(m)
    width = max(m, len(pairs))
    row = [Gate("AND", p) for p in pairs] + [Gate("CONST0")] * (width - len(pairs))
    return BooleanCircuit(width, (tuple(row),))


def _normalize_mix(mix) -> tuple[list[str], np.ndarray]:
    mix = dict(mix or DEFAULT_MIX)
    for op in mix:
        if op not in ARITY:
            raise PreconditionError(f"unknown gate {op!r} in mix")
    ops = list(mix)
    w = np.array([mix[o] for o in ops], dtype=np.float64)
    if (w < 0).any() or w.sum() <= 0:
        raise PreconditionError("gate mix weights must be nonnegative with a positive sum")
    return ops, w / w.sum()


def random_layer(m: int, ops, probs, gen) -> tuple[Gate, ...]:
    """One layer whose gates read disjoint wires, except the free second input of AND.

    When the permutation runs out of unused wires the remaining gates
    become CONST0.
    """
    pool = list(gen.permutation(m))
    choice = gen.choice(len(ops), size=m, p=probs)
    row = []
    for j in range(m):
        op = ops[choice[j]]
        need = {"AND": 1, "OR": 2, "XOR": 2}.get(op, ARITY[op])
        if need > len(pool):
            row.append(Gate("CONST0"))
            continue
        ins = [int(pool.pop()) for _ in range(need)]
        if op == "AND":
            other = int(gen.integers(m - 1))
            ins.append(other + (other >= ins[0]))
        row.append(Gate(op, tuple(ins)))
    return tuple(row)

def sample_probe_inputs(m: int, s: int, count: int, gen) -> np.ndarray:
    keys = gen.random((count, m))
    idx = np.argpartition(keys, s - 1, axis=1)[:, :s] if s < m else np.tile(np.arange(m), (count, 1))
    bits = np.zeros((count, m), dtype=bool)
    np.put_along_axis(bits, idx, True, axis=1)
    return bits


def generate_random_sparse_circuit(m: int, L: int, s: int, mix=None, rng: RngStream | None = None,
                                   probes: int = 200, tolerance: float = 0.01, max_tries: int = 200):
    """Random layered circuit that is s-sparse on random s-sparse inputs.

    Candidates are resampled while more than ``tolerance`` of the probe
    inputs push some layer above s active wires.  Returns ``(circuit, info)``
    with the number of tries and the accepted violation rate.
    """
    if m < 2 or L < 1 or not 1 <= s <= m:
        raise PreconditionError("need m >= 2, L >= 1 and 1 <= s <= m")
    rng = rng or RngStream(0)
    gen = rng.generator
    ops, probs = _normalize_mix(mix)
    probe = sample_probe_inputs(m, s, probes, gen)
    for attempt in range(1, max_tries + 1):
        c = BooleanCircuit(m, tuple(random_layer(m, ops, probs, gen) for _ in range(L)))
        counts = layer_active_counts(c, probe)
        rate = float((counts.max(axis=1) > s).mean())
        if rate <= tolerance:
            return c, {"tries": attempt, "violation_rate": rate, "probes": probes}
    raise GenerationError(f"no {s}-sparse circuit found in {max_tries} tries (m={m}, L={L})")


def gate_frequencies(circuits) -> dict:
    counts: dict = {}
    total = 0
    for c in circuits:
        for row in c.layers:
            for g in row:
                counts[g.op] = counts.get(g.op, 0) + 1
                total += 1
    return {op: n / total for op, n in counts.items()} if total else {}

