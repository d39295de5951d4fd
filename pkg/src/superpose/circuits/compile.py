"""Compile layered boolean circuits into ReLU networks acting on superposed codes.

One-layer mode concatenates high-fan-in AND blocks (one per term size of the
circuit's AND-polynomials) and reads every output off as an integer
combination of tuple read-offs.  Deep mode alternates, per circuit layer, an
AND block (plus the single-feature read-offs, passed as ReLU(+-Rx)) with an
error-correction layer that re-encodes the gate outputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
import json

import numpy as np

from ..correction import build_error_correction
from ..features import FeatureDictionary, ReadoffMatrix
from ..network import RELU, Layer, MlpNetwork
from ..tensor import PreconditionError, RngStream, sample_ternary_matrix, write_sbmat
from ..uand import EmptyIndexSet, FeatureGraph, build_targeted_uand, build_uand_basis, build_uand_highfanin
from .model import BooleanCircuit, eval_dense
from .polynomial import and_decomposition, gate_polynomial


class ContractionWarning(UserWarning):
    pass


@dataclass
class CompiledCircuit:
    network: MlpNetwork
    readoffs: list                 # ReadoffMatrix per circuit layer output (deep) or [final] (one-layer)
    dictionaries: list             # FeatureDictionary per encoding, input first
    input_readoff: ReadoffMatrix
    mode: str
    provenance: dict
    report: dict = field(default_factory=dict)
    gate_readoffs: list = field(default_factory=list)   # deep: gate values from each AND layer

    @property
    def width(self) -> int:
        return self.readoffs[-1].n_features

    def encode(self, bits) -> np.ndarray:
        return self.dictionaries[0].encode_batch(np.atleast_2d(bits))

    def layer_readouts(self, bits, chunk: int = 1024) -> list[np.ndarray]:
        """Read-offs of the input and of every circuit layer, each (n, width)."""
        bits = np.atleast_2d(np.asarray(bits, dtype=np.float64))
        step = 2 if self.mode == "deep" else 1
        outs = [[] for _ in range(len(self.readoffs) + 1)]
        for start in range(0, len(bits), chunk):
            x = self.encode(bits[start:start + chunk])
            outs[0].append(self.input_readoff.apply(x))
            trace = self.network.trace(x)
            for l, R in enumerate(self.readoffs):
                outs[l + 1].append(R.apply(trace[step * (l + 1) - 1]))
        return [np.concatenate(o) if o else np.zeros((0, self.width)) for o in outs]

    def readout(self, bits, chunk: int = 1024) -> np.ndarray:
        bits = np.atleast_2d(np.asarray(bits, dtype=np.float64))
        out = []
        for start in range(0, len(bits), chunk):
            out.append(self.readoffs[-1].apply(self.network(self.encode(bits[start:start + chunk]))))
        return np.concatenate(out) if out else np.zeros((0, self.width))

    def predict(self, bits, threshold: float = 0.5) -> np.ndarray:
        return self.readout(bits) > threshold

    def save(self, directory) -> None:
        d = Path(directory)
        self.network.save(d, {"mode": self.mode, "provenance": self.provenance,
                             "report": _jsonable(self.report)})
        for l, R in enumerate(self.readoffs):
            write_sbmat(d / f"readoff{l}.sbmat", R.matrix)
            if R.bias is not None:
                write_sbmat(d / f"readoff{l}_bias.sbmat", R.bias)
        write_sbmat(d / "input_dictionary.sbmat", self.dictionaries[0].phi)
        write_sbmat(d / "input_readoff.sbmat", self.input_readoff.matrix)


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))


def ternary_code(m: int, d: int, s: int, rng: RngStream) -> tuple[FeatureDictionary, ReadoffMatrix]:
    """Sparse signed code of the kind the correction layer emits, with its averaging read-off."""
    p = min(1.0, 1.0 / np.sqrt(d * s))
    phi = sample_ternary_matrix(d, m, p, rng)
    A = (s / d) ** 0.25
    sizes = np.count_nonzero(phi, axis=0)
    R = phi.T / (A * np.maximum(sizes, 1)[:, None])
    return FeatureDictionary(phi * A, kind="ternary", seed=rng.seed), ReadoffMatrix(R)


def _block_widths(d_per_fanin, degrees):
    if isinstance(d_per_fanin, dict):
        return {n: int(d_per_fanin[n]) for n in degrees}
    return {n: int(d_per_fanin) for n in degrees}


def compile_one_layer(c: BooleanCircuit, dictionary: FeatureDictionary, d_per_fanin, s: int, C=1.0,
                      rng: RngStream | None = None) -> CompiledCircuit:
    """Single hidden layer: pass-through of the feature read-offs plus one
    high-fan-in AND block per term size, read off through each output's
    AND-polynomial."""
    rng = rng or RngStream(0)
    if dictionary.m != c.width:
        raise PreconditionError(f"dictionary has {dictionary.m} features, circuit width {c.width}")
    polys = and_decomposition(c)
    m = c.width
    degrees = sorted({len(t) for p in polys for t in p.terms if len(t) >= 2})
    Cs = C if isinstance(C, dict) else {n: C for n in degrees}
    widths = _block_widths(d_per_fanin, degrees)
    R_in = dictionary.readoff()
    blocks, stack, biases = {}, [np.eye(m), -np.eye(m)], [np.zeros(2 * m)]
    offset = {1: 0}
    pos = 2 * m
    for n in degrees:
        net, _ = build_uand_highfanin(m, widths[n], s, n, Cs[n], rng.child(n))
        blocks[n] = net
        offset[n] = pos
        pos += net.d
        stack.append(net.win)
        biases.append(net.bias)
    hidden = Layer([np.vstack(stack), R_in.matrix], np.concatenate(biases), RELU, 1.0, "one-layer")
    rows = np.zeros((m, pos))
    bias = np.zeros(m)
    uncovered, l1 = [], []
    for j, poly in enumerate(polys):
        bias[j] = poly.constant
        l1.append(poly.l1)
        for subset, coef in poly.terms.items():
            idx = sorted(subset)
            if len(idx) == 1:
                rows[j, idx[0]] += coef
                rows[j, m + idx[0]] -= coef
                continue
            net = blocks[len(idx)]
            try:
                r = net.readoff_vector(*idx)
            except EmptyIndexSet:
                uncovered.append((j, tuple(idx)))
                continue
            o = offset[len(idx)]
            rows[j, o:o + net.d] += coef * r
    R_out = ReadoffMatrix(rows, bias)
    prov = {"mode": "one-layer", "circuit": c.digest(), "width": m, "depth": c.depth, "s": s,
            "C": {str(n): Cs[n] for n in degrees}, "block_widths": {str(n): widths[n] for n in degrees},
            "p": {str(n): blocks[n].p for n in degrees}, "seed": rng.seed, "stream": rng.stream_id,
            "dictionary": dictionary.sidecar()}
    report = {"uncovered_terms": uncovered, "l1": l1, "hidden_width": pos}
    return CompiledCircuit(MlpNetwork([hidden]), [R_out], [dictionary], R_in, "one-layer", prov, report)


def compile_deep(c: BooleanCircuit, d: int, s: int, C: float = 1.0, rng: RngStream | None = None,
                 and_block: str = "targeted", d_and: int | None = None, K: float = 1.0,
                 dictionary: FeatureDictionary | None = None, input_readoff: ReadoffMatrix | None = None,
                 probe_inputs: int = 64) -> CompiledCircuit:
    """2L layers: (AND block + feature pass-through, error correction) per circuit layer.

    ``and_block`` is "targeted" (AND of the gate input pairs only, the
    default) or "universal" (pairwise U-AND over all features).  The input code defaults
    to a ternary code of width d.
    """
    if and_block not in ("universal", "targeted"):
        raise PreconditionError(f"unknown and_block {and_block!r}")
    rng = rng or RngStream(0)
    m = c.width
    d_and = d if d_and is None else d_and
    if dictionary is None:
        dictionary, input_readoff = ternary_code(m, d, s, rng.child(0))
    elif input_readoff is None:
        input_readoff = dictionary.readoff()
    R = input_readoff
    layers, readoffs, dicts = [], [], [dictionary]
    empty, thresholds, gates = [], [], []
    for l, row in enumerate(c.layers):
        pairs = c.layer_pairs(l)
        stream = rng.child(2 * l + 1)
        if not pairs:
            win, bias_and, scale = np.zeros((0, m)), np.zeros(0), 1.0
            pair_rows, miss = ReadoffMatrix(np.zeros((0, 0))), []
        elif and_block == "universal":
            net, _ = build_uand_basis(m, d_and, max(s, 2), C, stream)
            win, bias_and, scale = net.win, net.bias, 1.0
            pair_rows, miss = net.readoff_matrix(pairs)
        else:
            tnet, _ = build_targeted_uand(FeatureGraph(m, frozenset(pairs)), d_and, s, stream, check_edges=False)
            win, bias_and, scale = tnet.phi_in, -np.ones(tnet.d), 4.0 / tnet.A
            pair_rows, miss = tnet.readoff_matrix(pairs)
        empty += [(l, p) for p in miss]
        w_and = win.shape[0]
        F0 = np.vstack([win, np.eye(m), -np.eye(m)])
        b0 = np.concatenate([bias_and, np.zeros(2 * m)])
        layers.append(Layer([F0, R.matrix], b0, RELU, 1.0, f"and{l}"))
        # gate read-off over [and block | +Rx | -Rx]
        width = w_and + 2 * m
        G = np.zeros((m, width))
        g0 = np.zeros(m)
        pair_index = {p: i for i, p in enumerate(pairs)}
        for j, gate in enumerate(row):
            poly = gate_polynomial(gate)
            g0[j] = poly.constant
            for subset, coef in poly.terms.items():
                idx = sorted(subset)
                if len(idx) == 1:
                    G[j, w_and + idx[0]] += coef
                    G[j, w_and + m + idx[0]] -= coef
                else:
                    G[j, :w_and] += coef * scale * pair_rows.matrix[pair_index[tuple(idx)]]
        gates.append(ReadoffMatrix(G, g0))
        ec = build_error_correction(m, d, s, gates[-1], rng.child(2 * l + 2), K=K)
        layers.append(ec.layer())
        R = ec.readoff()
        readoffs.append(R)
        dicts.append(ec.dictionary())
        thresholds.append(ec.threshold())
    net = MlpNetwork(layers)
    prov = {"mode": "deep", "circuit": c.digest(), "width": m, "depth": c.depth, "d": d, "d_and": d_and,
            "s": s, "C": C, "and_block": and_block, "K": K, "seed": rng.seed, "stream": rng.stream_id}
    report = {"empty_index_sets": empty, "thresholds": thresholds}
    cc = CompiledCircuit(net, readoffs, dicts, input_readoff, "deep", prov, report, gates)
    if probe_inputs:
        gen = rng.child(10_000).generator
        keys = gen.random((probe_inputs, m))
        bits = np.zeros((probe_inputs, m))
        np.put_along_axis(bits, np.argsort(keys, axis=1)[:, :s], 1.0, axis=1)
        eps = layer_eps(cc, c, bits)
        cc.report["probe_eps_in"] = eps
        over = [l for l in range(c.depth) if eps[l] > thresholds[l]]
        cc.report["precondition_violations"] = over
        if over:
            warnings.warn(f"correction layers {over} see input interference above their threshold",
                          ContractionWarning, stacklevel=2)
    return cc


def layer_eps(cc: CompiledCircuit, c: BooleanCircuit, bits) -> list[float]:
    """Max gate-value error entering each correction layer (deep mode)."""
    bits = np.atleast_2d(bits)
    truth = eval_dense(c, bits, trace=True)
    x = cc.encode(bits)
    trace = cc.network.trace(x)
    return [float(np.abs(cc.gate_readoffs[l].apply(trace[2 * l]) - truth[l + 1]).max())
            for l in range(c.depth)]


def compose_and_or(r1, r2, eps: float = 0.0) -> tuple[MlpNetwork, ReadoffMatrix]:
    """Two ReLUs on read-offs r1, r2 plus one combining unit.

    Read-off row 0 is AND = ReLU(n1 + n2 - 1), row 1 is OR = n1 + n2 - AND.
    """
    if not 0 <= eps < 0.25:
        raise PreconditionError("composition needs input error eps < 1/4")
    r1, r2 = np.asarray(r1, dtype=np.float64), np.asarray(r2, dtype=np.float64)
    if r1.shape != r2.shape:
        raise PreconditionError("read-off vectors must have the same length")
    first = Layer([np.vstack([r1, r2])], np.zeros(2), RELU, 1.0, "features")
    second = Layer([np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])], np.array([0.0, 0.0, -1.0]), RELU, 1.0,
                   "combine")
    R = ReadoffMatrix(np.array([[0.0, 0.0, 1.0], [1.0, 1.0, -1.0]]))
    return MlpNetwork([first, second]), R
