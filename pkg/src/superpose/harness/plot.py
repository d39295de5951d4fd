"""Deterministic log-log SVG plots of sweep columns with the fitted power law."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..tensor import PreconditionError  # noqa: E402
from .fit import fit_arrays  # noqa: E402
from .sweep import read_csv  # noqa: E402

_RC = {"svg.hashsalt": "superpose", "svg.fonttype": "none", "font.size": 9,
       "axes.grid": True, "grid.alpha": 0.3}


def emit_plot(csv, spec: dict, out=None) -> Path:
    """Scatter ``spec['y']`` against ``spec['x']`` on log axes plus the least-squares line.

    ``spec`` keys: x, y, optional title, group (column whose values get
    separate markers), out (path).  Returns the SVG path.
    """
    rows = csv if isinstance(csv, list) else read_csv(csv)
    if not rows:
        raise PreconditionError("no rows to plot")
    xcol, ycol = spec["x"], spec["y"]
    for col in (xcol, ycol):
        if col not in rows[0]:
            raise PreconditionError(f"missing column {col!r}")
    out = Path(out or spec.get("out") or f"{ycol}_vs_{xcol}.svg")
    rows = [r for r in rows if r.get("status", "ok") in ("ok", "")]
    group = spec.get("group")
    keys = sorted({r.get(group, "") for r in rows}) if group else [""]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        for i, key in enumerate(keys):
            sel = [r for r in rows if not group or r.get(group, "") == key]
            x = np.array([float(r[xcol]) for r in sel])
            y = np.array([float(r[ycol]) for r in sel])
            ok = (x > 0) & (y > 0)
            x, y = x[ok], y[ok]
            label = f"{group}={key}" if group else ycol
            ax.plot(x, y, "o", label=label, gid=f"marker{i}")
            if x.size >= 3:
                fit = fit_arrays(x, y, xcol)
                xs = np.geomspace(x.min(), x.max(), 50)
                ax.plot(xs, fit.predict(xs), "-", lw=1, label=f"slope {fit.exponent:.3f}", gid=f"fit{i}")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel(xcol)
        ax.set_ylabel(ycol)
        if spec.get("title"):
            ax.set_title(spec["title"])
        ax.legend()
        fig.tight_layout()
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    return out
