"""Gaze-estimation accuracy analysis: angular errors, subject and depth metrics,
directional (field-of-view) statistics with a robust 2D Gaussian fit, and a
seeded synthetic data generator with analytically known error fields."""

from __future__ import annotations

__version__ = "0.1.0"

from .dataio import Dataset, load_dataset, write_dataset
from .directional import GridCellStats, GridConfig, run_grid
from .errors import (
    BehindCamera,
    ConfigError,
    DegenerateInput,
    GazeStatsError,
    InsufficientData,
    NoData,
    SchemaError,
)
from .gaussian2d import FitConfig, FitResult, Gaussian2D, eigen_axes, moments_estimate, robust_fit
from .metrics import depth_error_curve, sample_error, split_summary, subject_error, subject_errors
from .synth import SynthConfig, expected_cell, generate

__all__ = [
    "__version__",
    "BehindCamera",
    "ConfigError",
    "Dataset",
    "DegenerateInput",
    "FitConfig",
    "FitResult",
    "Gaussian2D",
    "GazeStatsError",
    "GridCellStats",
    "GridConfig",
    "InsufficientData",
    "NoData",
    "SchemaError",
    "SynthConfig",
    "depth_error_curve",
    "eigen_axes",
    "expected_cell",
    "generate",
    "load_dataset",
    "moments_estimate",
    "robust_fit",
    "run_grid",
    "sample_error",
    "split_summary",
    "subject_error",
    "subject_errors",
    "write_dataset",
]
