"""Log-log least-squares scaling fits over sweep CSV columns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensor import PreconditionError
from .sweep import read_csv


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    intercept: float        # log-space: log y = intercept + exponent * log x
    residual: float         # root-mean-square residual in log space
    points: int
    variable: str

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=np.float64) ** self.exponent

    def as_dict(self) -> dict:
        return {"exponent": self.exponent, "intercept": self.intercept, "residual": self.residual,
                "points": self.points, "variable": self.variable}


def fit_arrays(x, y, variable: str = "x") -> ScalingFit:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise PreconditionError("x and y must be equal-length 1d sequences")
    if x.size < 3:
        raise PreconditionError(f"scaling fit needs at least 3 points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise PreconditionError("nonfinite values in fit columns")
    if (x <= 0).any() or (y <= 0).any():
        raise PreconditionError("log-log fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, icpt), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + icpt)
    return ScalingFit(float(slope), float(icpt), float(np.sqrt(np.mean(resid ** 2))), int(x.size), variable)


def fit_scaling(csv, y_column: str, x_column: str, where: dict | None = None) -> ScalingFit:
    """Fit ``y ~ x^k`` over the ok rows of a sweep CSV (path, text or row dicts).

    ``where`` keeps only rows whose columns equal the given string values.
    """
    rows = csv if isinstance(csv, list) else read_csv(csv)
    if rows and (y_column not in rows[0] or x_column not in rows[0]):
        raise PreconditionError(f"missing column {y_column!r} or {x_column!r}")
    rows = [r for r in rows if r.get("status", "ok") in ("ok", "")]
    for k, v in (where or {}).items():
        rows = [r for r in rows if str(r.get(k)) == str(v)]
    x = [float(r[x_column]) for r in rows]
    y = [float(r[y_column]) for r in rows]
    return fit_arrays(x, y, x_column)
