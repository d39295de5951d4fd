"""Samplers, sweeps, scaling fits, plots and the command line."""

from .fit import ScalingFit, fit_arrays, fit_scaling
from .sampling import EXHAUSTIVE_LIMIT, ExhaustiveGuardError, exhaustive_bits, sample_sparse_inputs
from .sweep import CSV_COLUMNS_V1, SCHEMA_VERSION, SweepConfig, SweepResult, read_csv, replay_cell, run_sweep

__all__ = ["ScalingFit", "fit_arrays", "fit_scaling", "EXHAUSTIVE_LIMIT", "ExhaustiveGuardError",
           "exhaustive_bits", "sample_sparse_inputs", "CSV_COLUMNS_V1", "SCHEMA_VERSION", "SweepConfig",
           "SweepResult", "read_csv", "replay_cell", "run_sweep", "emit_plot"]


def __getattr__(name):
    # matplotlib is imported only when plotting
    if name == "emit_plot":
        from .plot import emit_plot
        return emit_plot
    raise AttributeError(name)
