"""Experiment runner: presets, artifacts and the ``lab`` command line."""

from .config import PRESETS, ExperimentConfig, apply_override, assumption_proxies, preset
from .curves import AccuracyCurve, AccuracyRecorder, accuracy_curves
from .grid import decision_boundary_grid, write_grid_csv, write_grid_svg
from .runner import RunArtifacts, check, run, run_seed

__all__ = [
    "PRESETS", "ExperimentConfig", "apply_override", "assumption_proxies", "preset",
    "AccuracyCurve", "AccuracyRecorder", "accuracy_curves",
    "decision_boundary_grid", "write_grid_csv", "write_grid_svg",
    "RunArtifacts", "check", "run", "run_seed",
]
