"""Parameter sweeps over constructions, written as a versioned CSV.

Cells are the product of the construction kinds and the m, d, s, C grids, in
that order.  Cell i runs on ``RngStream(master_seed).child(i)``, so any row
can be replayed in isolation.  Wall-clock per cell goes to a companion
timing file; the main CSV holds only seeded quantities and is
byte-reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import product
from pathlib import Path

import numpy as np

from ..correction import apply_and_measure_contraction, build_error_correction
from ..features import random_unit_dictionary
from ..tensor import PreconditionError, RngStream
from ..uand import EmptyIndexSet, build_uand_basis, build_uand_highfanin, build_uand_superposed
from .sampling import MODES, check_exhaustive, exhaustive_supports, random_supports

SCHEMA_VERSION = "v1"
CSV_COLUMNS_V1 = (
    "schema", "cell", "kind", "m", "d", "s", "C", "n", "d_in", "mode", "samples", "tuples",
    "seed", "stream", "status", "p",
    "eps_max", "eps_mean", "eps_p50", "eps_p90", "eps_p99",
    "eps_max_all_on", "eps_max_partial", "eps_max_none",
    "eps_in_median", "eps_out_median", "empty_index_sets", "collisions", "error",
)
TIMING_COLUMNS = ("cell", "kind", "wall_clock_s")
KINDS = ("basis", "superposed", "highfanin", "error-correction")


@dataclass
class SweepConfig:
    kinds: list = field(default_factory=lambda: ["basis"])
    m: list = field(default_factory=lambda: [1024])
    d: list = field(default_factory=lambda: [1024, 4096, 16384])
    s: list = field(default_factory=lambda: [3])
    C: list = field(default_factory=lambda: [1.0])
    n: int = 3                      # fan-in for highfanin cells
    d_in: int | None = None         # input width for superposed cells (default d)
    samples: int = 2000             # per tuple and case (targeted) or per tuple (others)
    tuples: int = 200
    mode: str = "targeted"
    master_seed: int = 0
    noise_fraction: float = 0.5     # error-correction: injected noise as a fraction of the threshold
    K: float = 1.0
    trials: int = 500
    out_csv: str | None = None
    out_timing: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise PreconditionError(f"unknown sampling mode {self.mode!r}")
        for k in self.kinds:
            if k not in KINDS:
                raise PreconditionError(f"unknown construction {k!r}; expected one of {KINDS}")

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise PreconditionError(f"unknown config keys {sorted(extra)}")
        doc = {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in doc.items()}
        for key in ("m", "d", "s", "C"):
            if key in doc and not isinstance(doc[key], list):
                doc[key] = [doc[key]]
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def cells(self) -> list[dict]:
        grid = product(self.kinds, self.m, self.d, self.s, self.C)
        return [{"cell": i, "kind": k, "m": int(m), "d": int(d), "s": int(s), "C": float(C)}
                for i, (k, m, d, s, C) in enumerate(grid)]


def cell_stream(master_seed: int, index: int) -> RngStream:
    return RngStream(int(master_seed)).child(index)


@dataclass
class SweepResult:
    rows: list
    timings: list
    wall_clock_s: float

    def csv_text(self) -> str:
        return rows_to_csv(self.rows, CSV_COLUMNS_V1)

    def timing_text(self) -> str:
        return rows_to_csv(self.timings, TIMING_COLUMNS)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def read_csv(path_or_text) -> list[dict]:
    text = str(path_or_text)
    if "\n" not in text and Path(text).exists():
        text = Path(text).read_text()
    return list(csv.DictReader(io.StringIO(text)))


def _stats(errors: np.ndarray) -> dict:
    if errors.size == 0:
        return {k: float("nan") for k in ("eps_max", "eps_mean", "eps_p50", "eps_p90", "eps_p99")}
    p50, p90, p99 = np.percentile(errors, [50, 90, 99])
    return {"eps_max": float(errors.max()), "eps_mean": float(errors.mean()),
            "eps_p50": float(p50), "eps_p90": float(p90), "eps_p99": float(p99)}


def _case_supports(m, s, n, tup, samples, mode, gen):
    """(supports, target) per case: all of the tuple active, all but one, none."""
    if mode == "exhaustive":
        check_exhaustive(m, s)
        sup = list(exhaustive_supports(m, s))
        width = s
        arr = np.full((len(sup), width), -1, dtype=np.intp)
        for i, t in enumerate(sup):
            arr[i, :len(t)] = t
        target = np.array([set(tup) <= set(t) for t in sup], dtype=np.float64)
        return [("mixed", arr, target)]
    if mode == "monte-carlo":
        sup = random_supports(m, s, samples, gen)
        target = np.isin(sup, tup).sum(axis=1) == len(tup)
        return [("mixed", sup, target.astype(np.float64))]
    cases = []
    for name, on in (("all_on", n), ("partial", n - 1), ("none", 0)):
        if on > s or (name == "partial" and n < 2):
            continue
        rest = random_supports(m, s - on, samples, gen, exclude=tup)
        sup = np.hstack([np.tile(np.array(tup[:on], dtype=np.intp), (samples, 1)), rest])
        cases.append((name, sup, np.full(samples, 1.0 if on == n else 0.0)))
    return cases


def _sparse_readoffs(net, g, sup, gram=None):
    """Read-off of one index set on inputs given as padded supports (-1 = empty slot)."""
    valid = sup >= 0
    safe = np.where(valid, sup, 0)
    if gram is None:
        cols = net._mask[g][:, safe] * valid
        pre = cols.sum(axis=2, dtype=np.float64)
    else:
        # read-offs of the superposed input: R Phi b = sum of Gram columns
        rx = (gram[:, safe] * valid).sum(axis=2)            # (m, n_inputs)
        pre = net.win[g] @ rx
    pre = pre + net.bias[g][:, None]
    return np.maximum(pre, 0.0).mean(axis=0)


def _cell_uand(cell, cfg: SweepConfig, rng: RngStream) -> dict:
    m, d, s, C, kind = cell["m"], cell["d"], cell["s"], cell["C"], cell["kind"]
    gram = None
    if kind == "basis":
        net, _ = build_uand_basis(m, d, s, C, rng.child(0))
        n = 2
    elif kind == "highfanin":
        n = cfg.n
        net, _ = build_uand_highfanin(m, d, s, n, C, rng.child(0))
    else:
        n = 2
        d_in = cfg.d_in or d
        dictionary = random_unit_dictionary(m, d_in, rng.child(2))
        net, _ = build_uand_superposed(dictionary, d, s, C, rng.child(0))
        gram = dictionary.phi.T @ dictionary.phi
        cell["d_in"] = d_in
    gen = rng.child(1).generator
    per_case: dict = {}
    empty = 0
    for _ in range(cfg.tuples):
        tup = tuple(int(k) for k in np.sort(gen.choice(m, size=n, replace=False)))
        g = net.gamma(*tup)
        if g.size == 0:
            empty += 1
            continue
        for name, sup, target in _case_supports(m, s, n, tup, cfg.samples, cfg.mode, gen):
            r = _sparse_readoffs(net, g, sup, gram)
            per_case.setdefault(name, []).append(np.abs(r - target))
    errs = {k: np.concatenate(v) for k, v in per_case.items()}
    allerr = np.concatenate(list(errs.values())) if errs else np.zeros(0)
    out = {"n": n, "p": net.p, "empty_index_sets": empty, "collisions": int((allerr >= 0.5).sum())}
    out.update(_stats(allerr))
    for name in ("all_on", "partial", "none"):
        if name in errs:
            out[f"eps_max_{name}"] = float(errs[name].max())
    return out


def _cell_ec(cell, cfg: SweepConfig, rng: RngStream) -> dict:
    from ..circuits.compile import ternary_code
    m, d, s = cell["m"], cell["d"], cell["s"]
    dictionary, R_in = ternary_code(m, d, s, rng.child(0))
    layer = build_error_correction(m, d, s, R_in, rng.child(1), K=cfg.K, input_dictionary=dictionary)
    noise = cfg.noise_fraction * layer.threshold()
    res = apply_and_measure_contraction(layer, None, noise, cfg.trials, rng.child(2))
    out = {"p": layer.params["p"], "eps_in_median": res.median_in, "eps_out_median": res.median_out,
           "empty_index_sets": len(layer.empty_supports), "collisions": res.rounding_collisions}
    out.update(_stats(res.eps_out))
    return out


CELL_RUNNERS = {"basis": _cell_uand, "superposed": _cell_uand, "highfanin": _cell_uand,
                "error-correction": _cell_ec}


def run_cell(cfg: SweepConfig, cell: dict) -> tuple[dict, float]:
    rng = cell_stream(cfg.master_seed, cell["cell"])
    row = {"schema": SCHEMA_VERSION, "mode": cfg.mode, "samples": cfg.samples, "tuples": cfg.tuples,
           "seed": rng.seed, "stream": rng.stream_id, **cell}
    t0 = time.perf_counter()
    try:
        row.update(CELL_RUNNERS[cell["kind"]](row, cfg, rng))
        row["status"] = "ok"
    except EmptyIndexSet as exc:
        row.update(status="empty-index-set", error=f"empty index set {exc.features}")
    except Exception as exc:  # failures are data; the sweep carries on
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
        row["traceback"] = traceback.format_exc()
    return row, time.perf_counter() - t0


def replay_cell(cfg: SweepConfig, index: int) -> dict:
    """Rerun one cell from its derived seed alone."""
    return run_cell(cfg, cfg.cells()[index])[0]


def run_sweep(cfg: SweepConfig, threads: int = 1) -> SweepResult:
    cells = cfg.cells()
    t0 = time.perf_counter()
    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: run_cell(cfg, c), cells))
    else:
        results = [run_cell(cfg, c) for c in cells]
    rows = [r for r, _ in results]
    timings = [{"cell": r["cell"], "kind": r["kind"], "wall_clock_s": t} for r, t in results]
    res = SweepResult(rows, timings, time.perf_counter() - t0)
    if cfg.out_csv:
        Path(cfg.out_csv).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.out_csv).write_text(res.csv_text())
        timing = cfg.out_timing or str(Path(cfg.out_csv).with_suffix(".timing.csv"))
        Path(timing).write_text(res.timing_text())
    return res
