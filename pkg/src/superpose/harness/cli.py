"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 verification threshold not met,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..network import MlpNetwork
from ..tensor import PreconditionError, RngStream

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_INTERNAL = 0, 1, 2, 3
log = logging.getLogger("superpose")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(p, suppress: bool):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=default(0), help="master seed")
    p.add_argument("--threads", type=int, default=default(1), help="worker threads for sweeps")
    p.add_argument("--out-dir", default=default("out"), help="output directory")
    p.add_argument("--config", default=default(None), help="JSON config file")
    p.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="superpose", description="Boolean computation on superposed sparse features.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    p = cmd("build-uand", "build a U-AND layer and save it")
    p.add_argument("--kind", choices=("basis", "superposed", "highfanin"), default="basis")
    p.add_argument("--m", type=int, default=1024)
    p.add_argument("--d", type=int, default=4096)
    p.add_argument("--d-in", type=int, default=None)
    p.add_argument("--s", type=int, default=3)
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--C", type=float, default=1.0)

    p = cmd("build-ec", "build an error-correction layer on a ternary input code")
    p.add_argument("--m", type=int, default=4096)
    p.add_argument("--d", type=int, default=1024)
    p.add_argument("--s", type=int, default=4)
    p.add_argument("--K", type=float, default=1.0)

    p = cmd("build-balancer", "build the norm balancer")
    p.add_argument("--d", type=int, default=4096)
    p.add_argument("--s0", type=float, default=64.0)
    p.add_argument("--segments", type=int, default=None)

    for name, help_ in (("compile", "compile a circuit file"), ("verify", "check a compiled circuit against the evaluator")):
        p = cmd(name, help_)
        p.add_argument("mode", choices=("one-layer", "deep"))
        p.add_argument("--circuit", required=True, help="circuit text file")
        p.add_argument("--d", type=int, default=2048, help="width (deep) or width per AND block (one-layer)")
        p.add_argument("--s", type=int, default=3)
        p.add_argument("--C", type=float, default=1.0)
        p.add_argument("--and-block", choices=("universal", "targeted"), default="targeted")
        p.add_argument("--K", type=float, default=1.0)
        if name == "verify":
            p.add_argument("--inputs", type=int, default=10_000, help="monte-carlo inputs (0 = exhaustive)")
            p.add_argument("--min-match", type=float, default=0.999)

    p = cmd("sweep", "run a parameter sweep (CSV + SVG report)")
    p.add_argument("--kinds", nargs="+", default=None)
    p.add_argument("--m", type=int, nargs="+", default=None)
    p.add_argument("--d", type=int, nargs="+", default=None)
    p.add_argument("--s", type=int, nargs="+", default=None)
    p.add_argument("--C", type=float, nargs="+", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--tuples", type=int, default=None)
    p.add_argument("--mode", default=None)
    p.add_argument("--name", default="sweep", help="report file stem")

    p = cmd("fit", "log-log fit of two CSV columns")
    p.add_argument("--csv", required=True)
    p.add_argument("--y", default="eps_max")
    p.add_argument("--x", default="d")
    p.add_argument("--where", nargs="*", default=[], help="column=value filters")
    p.add_argument("--expect", type=float, nargs=2, default=None, metavar=("LO", "HI"),
                   help="exit 2 unless the exponent lies in [LO, HI]")

    p = cmd("plot", "log-log SVG plot of two CSV columns")
    p.add_argument("--csv", required=True)
    p.add_argument("--y", default="eps_max")
    p.add_argument("--x", default="d")
    p.add_argument("--group", default=None)
    p.add_argument("--title", default=None)
    p.add_argument("--out", default=None)

    p = cmd("gen-circuit", "generate a circuit file")
    p.add_argument("--kind", choices=("random", "uand", "identity"), default="random")
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--L", type=int, default=5)
    p.add_argument("--s", type=int, default=3)
    p.add_argument("--name", default=None)
    return parser


def _load_config(args) -> dict:
    if not args.config:
        return {}
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file {path} not found")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    return doc


def _apply_config(args, parser_defaults: dict, doc: dict):
    """Config values fill in any option left at its default."""
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if hasattr(args, dest) and getattr(args, dest) == parser_defaults.get(dest):
            setattr(args, dest, value)


def _out(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(doc: dict):
    print(json.dumps(doc, indent=2, sort_keys=True, default=str))


def cmd_build_uand(args):
    from ..features import random_unit_dictionary
    from ..uand import build_uand_basis, build_uand_highfanin, build_uand_superposed
    rng = RngStream(args.seed)
    if args.kind == "basis":
        net, _ = build_uand_basis(args.m, args.d, args.s, args.C, rng.child(0))
    elif args.kind == "highfanin":
        net, _ = build_uand_highfanin(args.m, args.d, args.s, args.n, args.C, rng.child(0))
    else:
        dictionary = random_unit_dictionary(args.m, args.d_in or args.d, rng.child(1))
        net, _ = build_uand_superposed(dictionary, args.d, args.s, args.C, rng.child(0))
    out = _out(args) / f"uand-{args.kind}"
    net.network().save(out, net.manifest())
    _emit({"saved": str(out), **net.params})
    return EXIT_OK


def cmd_build_ec(args):
    from ..circuits.compile import ternary_code
    from ..correction import build_error_correction
    rng = RngStream(args.seed)
    dictionary, R_in = ternary_code(args.m, args.d, args.s, rng.child(0))
    layer = build_error_correction(args.m, args.d, args.s, R_in, rng.child(1), K=args.K,
                                   input_dictionary=dictionary)
    out = _out(args) / "error-correction"
    MlpNetwork([layer.layer()]).save(out, layer.manifest())
    _emit({"saved": str(out), **layer.manifest()})
    return EXIT_OK


def cmd_build_balancer(args):
    from ..correction import build_norm_balancer
    bal = build_norm_balancer(args.d, args.s0, args.segments, RngStream(args.seed).child(0))
    out = _out(args) / "norm-balancer"
    bal.network().save(out, bal.manifest())
    _emit({"saved": str(out), **bal.manifest()})
    return EXIT_OK


def _read_circuit(path):
    from ..circuits.dsl import parse_circuit
    p = Path(path)
    if not p.exists():
        raise UsageError(f"circuit file {p} not found")
    return parse_circuit(p.read_text())


def _compile(args, circuit):
    from ..circuits.compile import compile_deep, compile_one_layer
    from ..features import identity_dictionary
    rng = RngStream(args.seed)
    if args.mode == "one-layer":
        return compile_one_layer(circuit, identity_dictionary(circuit.width), args.d, args.s, args.C, rng.child(0))
    return compile_deep(circuit, args.d, args.s, args.C, rng.child(0), and_block=args.and_block, K=args.K)


def cmd_compile(args):
    circuit = _read_circuit(args.circuit)
    cc = _compile(args, circuit)
    out = _out(args) / f"compiled-{args.mode}-{circuit.digest()}"
    cc.save(out)
    _emit({"saved": str(out), "layers": len(cc.network), **cc.provenance})
    return EXIT_OK


def cmd_verify(args):
    from ..circuits.model import eval_dense
    from .sampling import exhaustive_bits, random_supports, supports_to_bits
    circuit = _read_circuit(args.circuit)
    cc = _compile(args, circuit)
    if args.inputs == 0:
        bits = exhaustive_bits(circuit.width, args.s)
    else:
        gen = RngStream(args.seed).child(1).generator
        bits = supports_to_bits(random_supports(circuit.width, args.s, args.inputs, gen), circuit.width)
    pred = cc.predict(bits)
    truth = eval_dense(circuit, bits)
    match = float((pred == truth).all(axis=1).mean())
    _emit({"circuit": circuit.digest(), "mode": args.mode, "inputs": int(len(bits)), "match_rate": match,
           "min_match": args.min_match})
    return EXIT_OK if match >= args.min_match else EXIT_VERIFY


def cmd_sweep(args, doc):
    from .plot import emit_plot
    from .sweep import SweepConfig, run_sweep
    cfg_doc = {k: v for k, v in doc.items() if k not in ("seed", "threads", "out_dir", "out-dir")}
    for key in ("kinds", "m", "d", "s", "C", "samples", "tuples", "mode"):
        v = getattr(args, key)
        if v is not None:
            cfg_doc[key] = v
    cfg_doc.setdefault("master_seed", args.seed)
    out = _out(args)
    cfg_doc.setdefault("out_csv", str(out / f"{args.name}.csv"))
    cfg = SweepConfig.from_dict(cfg_doc)
    res = run_sweep(cfg, threads=args.threads)
    plots = []
    if len(cfg.d) >= 3:
        plots.append(str(emit_plot(res.csv_text(), {"x": "d", "y": "eps_max", "group": "kind",
                                                          "out": str(out / f"{args.name}_eps_max_vs_d.svg")})))
    failed = sum(r["status"] != "ok" for r in res.rows)
    _emit({"csv": cfg.out_csv, "rows": len(res.rows), "failed_cells": failed, "plots": plots,
           "wall_clock_s": round(res.wall_clock_s, 3)})
    return EXIT_OK


def cmd_fit(args):
    from .fit import fit_scaling
    where = {}
    for item in args.where:
        if "=" not in item:
            raise UsageError(f"filter {item!r} is not column=value")
        k, v = item.split("=", 1)
        where[k] = v
    fit = fit_scaling(args.csv, args.y, args.x, where)
    doc = fit.as_dict()
    if args.expect:
        lo, hi = args.expect
        doc["expected"] = [lo, hi]
        doc["within"] = lo <= fit.exponent <= hi
    _emit(doc)
    if args.expect and not doc["within"]:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_plot(args):
    from .plot import emit_plot
    out = args.out or str(_out(args) / f"{args.y}_vs_{args.x}.svg")
    path = emit_plot(args.csv, {"x": args.x, "y": args.y, "group": args.group, "title": args.title}, out)
    _emit({"svg": str(path)})
    return EXIT_OK


def cmd_gen_circuit(args):
    from ..circuits.dsl import format_circuit
    from ..circuits.generate import generate_random_sparse_circuit, generate_uand_circuit
    from ..circuits.model import BooleanCircuit
    info = {}
    if args.kind == "random":
        c, info = generate_random_sparse_circuit(args.m, args.L, args.s, rng=RngStream(args.seed).child(0))
    elif args.kind == "uand":
        c = generate_uand_circuit(args.m)
    else:
        c = BooleanCircuit.identity(args.m, args.L)
    name = args.name or f"{args.kind}-m{c.width}-L{c.depth}-seed{args.seed}"
    path = _out(args) / f"{name}.circ"
    path.write_text(format_circuit(c))
    _emit({"circuit": str(path), "digest": c.digest(), **info})
    return EXIT_OK


COMMANDS = {"build-uand": cmd_build_uand, "build-ec": cmd_build_ec, "build-balancer": cmd_build_balancer,
            "compile": cmd_compile, "verify": cmd_verify, "fit": cmd_fit, "plot": cmd_plot,
            "gen-circuit": cmd_gen_circuit}


def main(argv=None) -> int:
    from ..circuits.dsl import CircuitSyntaxError
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        doc = _load_config(args)
        _apply_config(args, _defaults(parser, args.command), doc)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        np.seterr(over="ignore")
        if args.command == "sweep":
            return cmd_sweep(args, doc)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PreconditionError, CircuitSyntaxError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def _defaults(parser, command) -> dict:
    out = {a.dest: a.default for a in parser._actions}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            sp = action.choices[command]
            out.update({a.dest: a.default for a in sp._actions if a.default is not argparse.SUPPRESS})
    return out


if __name__ == "__main__":
    sys.exit(main())
