"""Directional statistics over a field-of-view grid.

For each lattice direction ``d_gt`` the samples whose ground truth lies within
the neighborhood radius are rotated so their ground truth coincides with
``d_gt`` (offset correction), projected into the canonical tangent plane and
summarized by a robust 2D Gaussian fit.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import BehindCamera, DegenerateInput, InsufficientData
from .gaussian2d import FitConfig, FitResult, eigen_axes, robust_fit
from .geometry import (
    IDEAL_CAMERA,
    CameraIntrinsics,
    TangentFrame,
    angles_between,
    direction_from_angles,
    make_tangent_frame,
    normalized_image_coords,
    project_to_tangent,
    rotations_onto,
    tangent_length_to_angle,
)

if TYPE_CHECKING:
    from .dataio import Dataset

GRID_CSV_FIELDS = (
    "az_deg",
    "el_deg",
    "n",
    "valid",
    "bias_deg",
    "bias_dir_u",
    "bias_dir_v",
    "sigma_major_deg",
    "sigma_minor_deg",
    "major_u",
    "major_v",
    "minor_u",
    "minor_v",
    "mean_err_deg",
    "reason",
)

IMAGE_EPS = 1e-4


@dataclass(frozen=True)
class GridConfig:
    extent_deg: float = 45.0
    step_deg: float = 5.0
    neighborhood_radius_deg: float = 5.0
    min_cell_samples: int = 200
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self) -> None:
        if not self.step_deg > 0:
            raise ValueError("step_deg must be positive")
        if not 0 < self.neighborhood_radius_deg <= 15:
            raise ValueError("neighborhood_radius_deg must be in (0, 15]")
        if not 0 < self.extent_deg < 90:
            raise ValueError("extent_deg must be in (0, 90) to stay in front of the camera")

    def axis_values(self) -> np.ndarray:
        n = int(math.floor(self.extent_deg / self.step_deg + 1e-9))
        return self.step_deg * np.arange(-n, n + 1)

    def lattice(self) -> list[tuple[float, float]]:
        """``(azimuth, elevation)`` pairs, row-major by ascending elevation then azimuth."""
        vals = self.axis_values()
        return [(float(az), float(el)) for el in vals for az in vals]

    def to_dict(self) -> dict:
        return {
            "extent_deg": self.extent_deg,
            "step_deg": self.step_deg,
            "neighborhood_radius_deg": self.neighborhood_radius_deg,
            "min_cell_samples": self.min_cell_samples,
            "fit": self.fit.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridConfig":
        data = dict(data)
        fit = FitConfig.from_dict(data.pop("fit", {}))
        return cls(fit=fit, **data)


@dataclass(frozen=True)
class GridCellStats:
    az_deg: float
    el_deg: float
    d_gt: np.ndarray
    n_samples: int
    valid: bool
    reason: str = ""
    fit: FitResult | None = None
    bias_angle: float = math.nan
    bias_direction_image: np.ndarray = field(default_factory=lambda: np.full(2, math.nan))
    sigma_major_deg: float = math.nan
    sigma_minor_deg: float = math.nan
    major_dir_image: np.ndarray = field(default_factory=lambda: np.full(2, math.nan))
    minor_dir_image: np.ndarray = field(default_factory=lambda: np.full(2, math.nan))
    mean_sample_error_deg: float = math.nan
    # tangent-plane quantities (frame-dependent)
    mu_tangent: np.ndarray = field(default_factory=lambda: np.full(2, math.nan))
    major_axis_tangent: np.ndarray = field(default_factory=lambda: np.full(2, math.nan))
    # deviation of the projected axes from orthogonality, degrees
    image_orthogonality_dev_deg: float = math.nan


def select_and_correct_arrays(d_gt_all: np.ndarray, d_dev: np.ndarray, d_gt, radius_deg: float):
    """Offset-corrected estimates for samples within ``radius_deg`` of ``d_gt``.

    Returns ``(corrected, indices)``. Each estimate is rotated by the rotation
    (about ``d_gt^i x d_gt``) that maps its own ground truth onto ``d_gt``.
    """
    if not 0 < radius_deg <= 15:
        raise ValueError("radius must be in (0, 15] degrees")
    d_gt = np.asarray(d_gt, dtype=float)
    idx = np.flatnonzero(d_gt_all @ d_gt > math.cos(math.radians(radius_deg)))
    if idx.size:
        # exact angular test on the candidates
        idx = idx[angles_between(d_gt_all[idx], d_gt) < radius_deg]
    if idx.size == 0:
        return np.zeros((0, 3)), idx
    R = rotations_onto(d_gt_all[idx], d_gt)
    return np.einsum("nij,nj->ni", R, d_dev[idx]), idx


def select_and_correct(ds: "Dataset", d_gt, radius_deg: float) -> np.ndarray:
    corrected, _ = select_and_correct_arrays(ds.d_gt, ds.d_dev, d_gt, radius_deg)
    return corrected


def image_direction(frame: TangentFrame, v, eps: float = IMAGE_EPS) -> np.ndarray:
    """Unit direction in normalized image space of tangent direction ``v`` at ``frame.d_gt``.

    Central difference of the projection of ``normalize(d_gt +- eps * v3)``.
    """
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0:
        return np.zeros(2)
    v3 = frame.lift(v / nv)
    plus = frame.d_gt + eps * v3
    minus = frame.d_gt - eps * v3
    diff = normalized_image_coords(plus / np.linalg.norm(plus)) - normalized_image_coords(minus / np.linalg.norm(minus))
    return diff / np.linalg.norm(diff)


def axes_to_image(frame: TangentFrame, major, minor, bias, eps: float = IMAGE_EPS):
    """Image-space directions of the major axis, minor axis and bias vector."""
    return image_direction(frame, major, eps), image_direction(frame, minor, eps), image_direction(frame, bias, eps)


def _invalid(az, el, d_gt, n, reason, fit=None, mean_err=math.nan) -> GridCellStats:
    return GridCellStats(az, el, d_gt, n, False, reason, fit=fit, mean_sample_error_deg=mean_err)


def cell_stats(
    d_gt,
    corrected: np.ndarray,
    cfg: GridConfig | None = None,
    intr: CameraIntrinsics = IDEAL_CAMERA,
    az_deg: float = math.nan,
    el_deg: float = math.nan,
) -> GridCellStats:
    """Fit and summarize one cell from its offset-corrected estimates."""
    cfg = cfg or GridConfig()
    d_gt = np.asarray(d_gt, dtype=float)
    corrected = np.asarray(corrected, dtype=float).reshape(-1, 3)
    n = len(corrected)
    frame = make_tangent_frame(d_gt)
    pts = project_to_tangent(frame, corrected)
    # canonical order: the fit result must not depend on record order
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    mean_err = float(np.mean(angles_between(corrected, d_gt))) if n else math.nan
    if n < cfg.min_cell_samples:
        return _invalid(az_deg, el_deg, d_gt, n, "insufficient_samples", mean_err=mean_err)
    fit_cfg = cfg.fit
    if fit_cfg.min_samples > n:
        fit_cfg = FitConfig.from_dict({**fit_cfg.to_dict(), "min_samples": max(3, cfg.min_cell_samples)})
    try:
        fit = robust_fit(pts, fit_cfg)
    except DegenerateInput:
        return _invalid(az_deg, el_deg, d_gt, n, "degenerate", mean_err=mean_err)
    except InsufficientData:
        return _invalid(az_deg, el_deg, d_gt, n, "insufficient_samples", mean_err=mean_err)
    axes = eigen_axes(fit.gaussian)
    mu = fit.gaussian.mu
    try:
        major_img, minor_img, bias_img = axes_to_image(frame, axes.major_axis, axes.minor_axis, mu)
    except BehindCamera:
        return _invalid(az_deg, el_deg, d_gt, n, "behind_camera", fit=fit, mean_err=mean_err)
    ortho = abs(math.degrees(math.acos(float(np.clip(major_img @ minor_img, -1, 1)))) - 90.0)
    reason = "" if fit.converged else "not_converged"
    return GridCellStats(
        az_deg=az_deg,
        el_deg=el_deg,
        d_gt=d_gt,
        n_samples=n,
        valid=fit.converged,
        reason=reason,
        fit=fit,
        bias_angle=tangent_length_to_angle(min(float(np.linalg.norm(mu)), 1.0)),
        bias_direction_image=bias_img,
        sigma_major_deg=tangent_length_to_angle(min(axes.sigma_major, 1.0)),
        sigma_minor_deg=tangent_length_to_angle(min(axes.sigma_minor, 1.0)),
        major_dir_image=major_img,
        minor_dir_image=minor_img,
        mean_sample_error_deg=mean_err,
        mu_tangent=mu,
        major_axis_tangent=axes.major_axis,
        image_orthogonality_dev_deg=ortho,
    )


def run_grid(
    ds: "Dataset",
    cfg: GridConfig | None = None,
    intr: CameraIntrinsics = IDEAL_CAMERA,
    threads: int = 1,
) -> list[GridCellStats]:
    """Directional statistics for every lattice cell, ordered by (elevation, azimuth)."""
    cfg = cfg or GridConfig()
    if len(ds) == 0:
        raise ValueError("empty dataset")
    d_gt_all = ds.d_gt
    d_dev = ds.d_dev
    lattice = cfg.lattice()

    def one(cell):
        az, el = cell
        d = direction_from_angles(az, el)
        corrected, _ = select_and_correct_arrays(d_gt_all, d_dev, d, cfg.neighborhood_radius_deg)
        return cell_stats(d, corrected, cfg, intr, az, el)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, lattice))
    return [one(c) for c in lattice]


def _f(x: float) -> str:
    return "nan" if not math.isfinite(x) else f"{x:.6f}"


def grid_to_csv(cells: list[GridCellStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_CSV_FIELDS)
    for c in cells:
        w.writerow(
            [
                _f(c.az_deg),
                _f(c.el_deg),
                c.n_samples,
                int(c.valid),
                _f(c.bias_angle),
                _f(c.bias_direction_image[0]),
                _f(c.bias_direction_image[1]),
                _f(c.sigma_major_deg),
                _f(c.sigma_minor_deg),
                _f(c.major_dir_image[0]),
                _f(c.major_dir_image[1]),
                _f(c.minor_dir_image[0]),
                _f(c.minor_dir_image[1]),
                _f(c.mean_sample_error_deg),
                c.reason,
            ]
        )
    return buf.getvalue()


def grid_from_csv(text: str) -> list[dict]:
    """Parse a grid CSV into dicts of floats (``valid``/``n`` as ints, ``reason`` as str)."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row: dict = {}
        for k, v in rec.items():
            if k == "reason":
                row[k] = v
            elif k in ("n", "valid"):
                row[k] = int(v)
            else:
                row[k] = float(v)
        rows.append(row)
    return rows
