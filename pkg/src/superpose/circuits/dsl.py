"""Text format for layered circuits.

    circuit width=4 depth=2
    layer 1:
      w0 = AND(w0, w1)     # inputs refer to the previous layer
      w2 = NOT(w3)
    layer 2:
      w1 = XOR(w0, w2@1)   # optional @l names the source layer explicitly

Wires not assigned in a layer carry over unchanged (implicit COPY).  Layers
that are omitted entirely are all-COPY.  Wire and layer numbers follow the
library convention: wires are 0-based, layer 0 is the circuit input.
"""

from __future__ import annotations

import re

from .model import ARITY, BooleanCircuit, CircuitError, Gate


class CircuitSyntaxError(CircuitError):
    def __init__(self, msg: str, line: int, col: int):
        self.line, self.col = line, col
        super().__init__(f"line {line}, col {col}: {msg}")


_HEADER = re.compile(r"circuit\s+width\s*=\s*(\d+)\s+depth\s*=\s*(\d+)\s*$")
_LAYER = re.compile(r"layer\s+(\d+)\s*:\s*$")
_ASSIGN = re.compile(r"w(\d+)\s*=\s*([A-Za-z0-9_]+)\s*(?:\((.*)\))?\s*$")
_REF = re.compile(r"\s*w(\d+)(?:@(\d+))?\s*$")


def parse_circuit(text: str) -> BooleanCircuit:
    width = depth = None
    rows: dict[int, dict[int, Gate]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        stripped = body.strip()
        if not stripped:
            continue
        col = len(body) - len(body.lstrip()) + 1
        if width is None:
            m = _HEADER.match(stripped)
            if not m:
                raise CircuitSyntaxError("expected header 'circuit width=<m> depth=<L>'", lineno, col)
            width, depth = int(m.group(1)), int(m.group(2))
            if width < 1:
                raise CircuitSyntaxError("width must be positive", lineno, col)
            continue
        m = _LAYER.match(stripped)
        if m:
            l = int(m.group(1))
            if not 1 <= l <= depth:
                raise CircuitSyntaxError(f"layer {l} outside 1..{depth}", lineno, col)
            if current is not None and l <= current:
                raise CircuitSyntaxError(f"layer {l} out of order", lineno, col)
            current = l
            rows[l] = {}
            continue
        if current is None:
            raise CircuitSyntaxError("gate outside a layer block", lineno, col)
        m = _ASSIGN.match(stripped)
        if not m:
            raise CircuitSyntaxError("expected 'w<j> = OP(w<i>[, w<k>])'", lineno, col)
        out, op, args = int(m.group(1)), m.group(2).upper(), m.group(3)
        if op not in ARITY:
            raise CircuitSyntaxError(f"unknown gate {m.group(2)!r}", lineno, col + m.start(2))
        if out >= width:
            raise CircuitSyntaxError(f"wire w{out} exceeds width {width}", lineno, col)
        if out in rows[current]:
            raise CircuitSyntaxError(f"wire w{out} assigned twice in layer {current}", lineno, col)
        refs = []
        if args is not None and args.strip():
            offset = col + m.start(3)
            for piece in args.split(","):
                r = _REF.match(piece)
                if not r:
                    raise CircuitSyntaxError(f"bad wire reference {piece.strip()!r}", lineno, offset)
                i = int(r.group(1))
                if r.group(2) is not None:
                    src = int(r.group(2))
                    if src >= current:
                        kind = "same-layer" if src == current else "forward"
                        raise CircuitSyntaxError(f"{kind} reference w{i}@{src} in layer {current}", lineno, offset)
                    if src != current - 1:
                        raise CircuitSyntaxError(f"w{i}@{src} skips layers; circuits are strictly layered",
                                                 lineno, offset)
                if i >= width:
                    raise CircuitSyntaxError(f"wire w{i} exceeds width {width}", lineno, offset)
                refs.append(i)
                offset += len(piece) + 1
        if len(refs) != ARITY[op]:
            raise CircuitSyntaxError(f"{op} takes {ARITY[op]} inputs, got {len(refs)}", lineno, col + m.start(2))
        rows[current][out] = Gate(op, tuple(refs))
    if width is None:
        raise CircuitSyntaxError("empty circuit text", 1, 1)
    layers = []
    for l in range(1, depth + 1):
        given = rows.get(l, {})
        layers.append(tuple(given.get(j, Gate("COPY", (j,))) for j in range(width)))
    return BooleanCircuit(width, tuple(layers))


def format_circuit(c: BooleanCircuit) -> str:
    lines = [f"circuit width={c.width} depth={c.depth}"]
    for l, row in enumerate(c.layers, start=1):
        lines.append(f"layer {l}:")
        for j, g in enumerate(row):
            if g.op == "COPY" and g.inputs == (j,):
                continue
            args = ", ".join(f"w{i}" for i in g.inputs)
            lines.append(f"  w{j} = {g.op}({args})")
    return "\n".join(lines) + "\n"
