"""Sample- and subject-level error metrics, depth curves and population splits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import NoData, SchemaError
from .geometry import angle_between, angles_between, normalize, normalize_rows

if TYPE_CHECKING:
    from .dataio import Dataset

ENVIRONMENTS = ("indoor", "outdoor")
SUBJECT_DEPTH_RANGE_CM = (30.0, 350.0)
SUBJECT_DEPTH_BINS = 10
DEPTH_SANITY_CM = (20.0, 1000.0)
IPD_RANGE_MM = (45.0, 85.0)


@dataclass(frozen=True)
class GazeSample:
    subject_id: str
    session_id: str
    device_id: str
    environment: str
    p_gt: np.ndarray  # cm, scene-camera coordinates
    d_dev: np.ndarray
    p_dev: np.ndarray | None = None  # px

    @property
    def d_gt(self) -> np.ndarray:
        return normalize(self.p_gt)

    @property
    def depth_cm(self) -> float:
        return float(np.linalg.norm(self.p_gt))


@dataclass(frozen=True)
class SubjectMeta:
    subject_id: str
    age: float
    gender_appearance: str
    ipd_mm: float
    contact_lenses: bool
    eye_makeup: bool

    def __post_init__(self) -> None:
        if not self.age >= 0:
            raise ValueError(f"subject {self.subject_id}: age must be >= 0")
        if not IPD_RANGE_MM[0] <= self.ipd_mm <= IPD_RANGE_MM[1]:
            raise ValueError(f"subject {self.subject_id}: ipd {self.ipd_mm} mm outside {IPD_RANGE_MM}")


@dataclass(frozen=True)
class SubjectError:
    subject_id: str
    environment: str | None  # None = all environments pooled
    value: float  # degrees
    bins_used: int
    samples_used: int


@dataclass(frozen=True)
class DepthBin:
    lo_cm: float
    hi_cm: float
    mean_deg: float  # nan when count == 0
    count: int

    @property
    def center_cm(self) -> float:
        return 0.5 * (self.lo_cm + self.hi_cm)


@dataclass(frozen=True)
class GroupStats:
    group: str
    mean_deg: float
    std_deg: float
    n: int


def sample_error(s: GazeSample) -> float:
    """Angle in degrees between the ground-truth and the estimated gaze direction."""
    return angle_between(normalize(s.p_gt), s.d_dev)


def sample_errors(p_gt: np.ndarray, d_dev: np.ndarray) -> np.ndarray:
    return angles_between(normalize_rows(p_gt), d_dev)


def binned_subject_error(depths: np.ndarray, errors: np.ndarray) -> tuple[float, int, int]:
    """Mean over non-empty depth bins of the per-bin mean error.

    Ten uniform bins over [30, 350] cm; samples outside the range are ignored.
    Returns ``(value, bins_used, samples_used)``.
    """
    lo, hi = SUBJECT_DEPTH_RANGE_CM
    depths = np.asarray(depths, dtype=float)
    errors = np.asarray(errors, dtype=float)
    inside = (depths >= lo) & (depths <= hi)
    if not inside.any():
        raise NoData(f"no samples with depth in [{lo:g}, {hi:g}] cm")
    idx = np.minimum(((depths[inside] - lo) / (hi - lo) * SUBJECT_DEPTH_BINS).astype(int), SUBJECT_DEPTH_BINS - 1)
    sums = np.bincount(idx, weights=errors[inside], minlength=SUBJECT_DEPTH_BINS)
    counts = np.bincount(idx, minlength=SUBJECT_DEPTH_BINS)
    used = counts > 0
    means = sums[used] / counts[used]
    return math.fsum(means) / len(means), int(used.sum()), int(inside.sum())


def subject_error(samples: Sequence[GazeSample], environment: str | None = None) -> SubjectError:
    """Subject error for the samples of one subject (optionally one environment)."""
    if environment is not None:
        samples = [s for s in samples if s.environment == environment]
    if not samples:
        raise NoData("no samples")
    ids = {s.subject_id for s in samples}
    if len(ids) != 1:
        raise ValueError(f"samples belong to several subjects: {sorted(ids)}")
    depths = np.array([s.depth_cm for s in samples])
    errors = np.array([sample_error(s) for s in samples])
    # sort so bincount accumulates in a canonical order
    order = np.lexsort((errors, depths))
    value, bins_used, n = binned_subject_error(depths[order], errors[order])
    return SubjectError(ids.pop(), environment, value, bins_used, n)


def subject_errors(ds: "Dataset", environment: str | None = None, by_environment: bool = False) -> list[SubjectError]:
    """Subject errors for every subject of ``ds`` ordered by subject id.

    With ``by_environment`` each subject contributes one entry per environment
    it was recorded in. Subjects without in-range samples are skipped.
    """
    errors = sample_errors(ds.p_gt, ds.d_dev)
    depths = np.linalg.norm(ds.p_gt, axis=1)
    envs: Iterable[str | None]
    if by_environment:
        envs = ENVIRONMENTS
    else:
        envs = (environment,)
    out = []
    for sid in sorted(set(ds.subject_id.tolist())):
        mine = ds.subject_id == sid
        for env in envs:
            sel = mine if env is None else mine & (ds.environment == env)
            if not sel.any():
                continue
            order = np.lexsort((errors[sel], depths[sel]))
            try:
                value, bins_used, n = binned_subject_error(depths[sel][order], errors[sel][order])
            except NoData:
                continue
            out.append(SubjectError(sid, env, value, bins_used, n))
    return out


def depth_error_curve(
    ds: "Dataset", n_bins: int = 10, depth_range_cm: tuple[float, float] = SUBJECT_DEPTH_RANGE_CM
) -> list[DepthBin]:
    """Pooled mean sample error per uniform depth bin."""
    if len(ds) == 0:
        raise NoData("empty dataset")
    lo, hi = depth_range_cm
    edges = np.linspace(lo, hi, n_bins + 1)
    depths = np.linalg.norm(ds.p_gt, axis=1)
    errors = sample_errors(ds.p_gt, ds.d_dev)
    order = np.lexsort((errors, depths))
    depths, errors = depths[order], errors[order]
    inside = (depths >= lo) & (depths <= hi)
    idx = np.minimum(np.searchsorted(edges, depths[inside], side="right") - 1, n_bins - 1)
    sums = np.bincount(idx, weights=errors[inside], minlength=n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    return [
        DepthBin(float(edges[i]), float(edges[i + 1]), float(sums[i] / counts[i]) if counts[i] else math.nan, int(counts[i]))
        for i in range(n_bins)
    ]


SPLITS = ("gender_appearance", "contact_lenses", "eye_makeup", "environment")


def _group_stats(group: str, values: list[float]) -> GroupStats:
    v = np.array(values, dtype=float)
    return GroupStats(group, float(v.mean()), float(v.std()), len(v))


def _resolve(errors: Sequence[SubjectError], meta: dict) -> None:
    for e in errors:
        if e.subject_id not in meta:
            raise SchemaError(f"subject '{e.subject_id}' has no metadata", field="subject_id")


def split_summary(errors: Sequence[SubjectError], meta: dict, split: str) -> list[GroupStats]:
    """Mean, population std and subject count of subject errors per group.

    ``split`` is one of :data:`SPLITS`. For ``environment`` the groups come from
    each error's environment tag; the others read the subject metadata.
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split '{split}', expected one of {SPLITS}")
    _resolve(errors, meta)
    groups: dict[str, list[float]] = {}
    for e in sorted(errors, key=lambda e: (e.subject_id, e.environment or "")):
        if split == "environment":
            key = e.environment or "all"
        else:
            raw = getattr(meta[e.subject_id], split)
            key = str(raw).lower() if isinstance(raw, bool) else str(raw)
        groups.setdefault(key, []).append(e.value)
    return [_group_stats(k, groups[k]) for k in sorted(groups)]


def binned_summary(errors: Sequence[SubjectError], meta: dict, attribute: str, edges: Sequence[float]) -> list[GroupStats]:
    """Subject-error statistics in bins of a numeric attribute (``age`` or ``ipd_mm``).

    Group labels are ``"[lo, hi)"``; empty bins are reported with ``n == 0``.
    """
    _resolve(errors, meta)
    edges = list(edges)
    buckets: list[list[float]] = [[] for _ in range(len(edges) - 1)]
    for e in sorted(errors, key=lambda e: (e.subject_id, e.environment or "")):
        x = float(getattr(meta[e.subject_id], attribute))
        i = int(np.searchsorted(edges, x, side="right")) - 1
        if 0 <= i < len(buckets):
            buckets[i].append(e.value)
    out = []
    for i, vals in enumerate(buckets):
        label = f"[{edges[i]:g}, {edges[i + 1]:g})"
        out.append(_group_stats(label, vals) if vals else GroupStats(label, math.nan, math.nan, 0))
    return out


def default_edges(attribute: str, values: Sequence[float]) -> list[float]:
    """5-year age bins or 2 mm IPD bins covering ``values``."""
    width = {"age": 5.0, "ipd_mm": 2.0}[attribute]
    lo = math.floor(min(values) / width) * width
    hi = (math.floor(max(values) / width) + 1) * width
    return list(np.arange(lo, hi + width / 2, width))


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def groups_to_csv(rows: Sequence[GroupStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "mean_deg", "std_deg", "n"])
    for r in rows:
        w.writerow([r.group, _fmt(r.mean_deg), _fmt(r.std_deg), r.n])
    return buf.getvalue()


def subject_errors_to_csv(rows: Sequence[SubjectError]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "environment", "subject_error_deg", "bins_used", "samples_used"])
    for r in rows:
        w.writerow([r.subject_id, r.environment or "all", _fmt(r.value), r.bins_used, r.samples_used])
    return buf.getvalue()


def depth_curve_to_csv(rows: Sequence[DepthBin]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["depth_lo_cm", "depth_hi_cm", "depth_center_cm", "mean_deg", "count"])
    for r in rows:
        w.writerow([_fmt(r.lo_cm), _fmt(r.hi_cm), _fmt(r.center_cm), _fmt(r.mean_deg), r.count])
    return buf.getvalue()
