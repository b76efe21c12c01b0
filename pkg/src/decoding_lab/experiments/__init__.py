"""Witness fixtures, the simulation sweep, plots and the verification suite."""
from .plots import emit_plots
from .sweep import SweepConfig, SweepResult, run_sweep
from .verify import verify_all

__all__ = ["SweepConfig", "SweepResult", "emit_plots", "run_sweep", "verify_all"]
