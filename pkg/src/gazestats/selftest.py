"""Acceptance suite: synthetic-oracle closure and property checks.

Each ``criterion_N`` returns a :class:`CriterionResult`; :func:`run_all` runs a
selection. Tolerances are fixed here and not configurable.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .directional import GridCellStats, GridConfig, image_direction, run_grid, select_and_correct_arrays
from .gaussian2d import (
    FitConfig,
    Gaussian2D,
    build_histogram,
    eigen_axes,
    model_and_jacobian,
    moments_estimate,
    robust_fit,
    sample,
)
from .geometry import (
    IDEAL_CAMERA,
    angles_between,
    make_tangent_frame,
    normalize_rows,
    project_point,
    project_to_tangent,
    rotations_onto,
    tangent_length_to_angle,
    unproject_point,
)
from .metrics import binned_subject_error, depth_error_curve
from .synth import SynthConfig, expected_cell, generate

# closure tolerances (degrees)
BIAS_TOL = 0.15
SIGMA_MINOR = (3.0, 0.2)
SIGMA_MAJOR = (4.0, 0.25)
CLOSURE_RUNTIME_S = 60.0

BIAS_RMS_TOL = 0.15
BIAS_DIR_TOL = 10.0
BIAS_DIR_MIN = 0.5
BIASED_SAMPLES = 10**6

OUTLIER_RATE = 0.05
OUTLIER_CONE = 20.0
MOMENTS_VIOLATION_MIN = 0.5

UNIT_MU = np.array([1.0, 1.0])
UNIT_SIGMA = np.array([[0.7, 0.8], [0.8, 2.5]])

RAMP = {"kind": "center_ramp", "base_deg": 0.3, "peak_deg": 2.5, "ramp_start_deg": -20.0, "ramp_end_deg": -40.0, "taper_deg": 5.0}
DEPTH_KNOTS = ((50.0, 1.4), (150.0, 1.0))


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def __post_init__(self) -> None:
        self.passed = bool(self.passed)
        self.metrics = {k: v.item() if isinstance(v, np.generic) else v for k, v in self.metrics.items()}

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.title} -- {self.detail} ({self.seconds:.1f} s)"

    def to_dict(self) -> dict:
        # timing is left out so reports are byte-reproducible
        return {"number": self.number, "title": self.title, "passed": self.passed, "detail": self.detail, "metrics": self.metrics}


def closure_violations(cells: list[GridCellStats]) -> dict:
    """Counts of valid cells outside the unbiased-closure tolerances."""
    valid = [c for c in cells if c.valid]
    bias = [c for c in valid if c.bias_angle > BIAS_TOL]
    minor = [c for c in valid if abs(c.sigma_minor_deg - SIGMA_MINOR[0]) > SIGMA_MINOR[1]]
    major = [c for c in valid if abs(c.sigma_major_deg - SIGMA_MAJOR[0]) > SIGMA_MAJOR[1]]
    return {
        "valid_cells": len(valid),
        "bias_violations": len(bias),
        "sigma_minor_violations": len(minor),
        "sigma_major_violations": len(major),
        "any_violation": len({id(c) for c in bias + minor + major}),
        "max_bias_deg": max((c.bias_angle for c in valid), default=math.nan),
        "max_sigma_minor_dev_deg": max((abs(c.sigma_minor_deg - SIGMA_MINOR[0]) for c in valid), default=math.nan),
        "max_sigma_major_dev_deg": max((abs(c.sigma_major_deg - SIGMA_MAJOR[0]) for c in valid), default=math.nan),
    }


def _closure_detail(v: dict) -> str:
    return (
        f"{v['valid_cells']} valid cells; violations bias {v['bias_violations']}, "
        f"sigma_minor {v['sigma_minor_violations']}, sigma_major {v['sigma_major_violations']}; "
        f"max bias {v['max_bias_deg']:.3f} deg"
    )


def _round(d: dict) -> dict:
    return {k: (round(v, 6) if isinstance(v, float) else v) for k, v in d.items()}


def criterion_1(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    ds = generate(SynthConfig())
    cells = run_grid(ds, GridConfig(), threads=1)  # runtime budget is single-threaded
    elapsed = time.perf_counter() - t0
    v = closure_violations(cells)
    v["runtime_s_under_budget"] = elapsed <= CLOSURE_RUNTIME_S
    passed = v["valid_cells"] > 0 and v["any_violation"] == 0 and elapsed <= CLOSURE_RUNTIME_S
    return CriterionResult(1, "unbiased closure, 1e5 samples", passed, _closure_detail(v), _round(v), elapsed)


def _moments_violation(d_gt, corrected) -> bool:
    frame = make_tangent_frame(d_gt)
    g = moments_estimate(project_to_tangent(frame, corrected))
    ax = eigen_axes(g)
    bias = tangent_length_to_angle(min(float(np.linalg.norm(g.mu)), 1.0))
    s_minor = tangent_length_to_angle(min(ax.sigma_minor, 1.0))
    s_major = tangent_length_to_angle(min(ax.sigma_major, 1.0))
    return (
        bias > BIAS_TOL
        or abs(s_minor - SIGMA_MINOR[0]) > SIGMA_MINOR[1]
        or abs(s_major - SIGMA_MAJOR[0]) > SIGMA_MAJOR[1]
    )


def criterion_3(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    ds = generate(SynthConfig(outlier_rate=OUTLIER_RATE, outlier_cone_deg=OUTLIER_CONE))
    cfg = GridConfig()
    cells = run_grid(ds, cfg, threads=threads)
    v = closure_violations(cells)
    d_gt_all, d_dev = ds.d_gt, ds.d_dev
    flags = []
    for c in cells:
        if c.valid:
            corrected, _ = select_and_correct_arrays(d_gt_all, d_dev, c.d_gt, cfg.neighborhood_radius_deg)
            flags.append(_moments_violation(c.d_gt, corrected))
    frac = float(np.mean(flags)) if flags else math.nan
    v["moments_violation_fraction"] = frac
    robust_ok = v["valid_cells"] > 0 and v["any_violation"] == 0
    moments_ok = frac >= MOMENTS_VIOLATION_MIN
    detail = f"robust: {_closure_detail(v)}; moments estimate violates on {100 * frac:.1f}% of cells"
    return CriterionResult(3, "robustness to 5% cone outliers", robust_ok and moments_ok, detail, _round(v), time.perf_counter() - t0)


def biased_config() -> SynthConfig:
    return SynthConfig(n_subjects=BIASED_SAMPLES // 2000, bias=dict(RAMP))


def bias_errors(cfg: SynthConfig, cells: list[GridCellStats]) -> dict:
    """RMS bias-vector error and worst direction error against the analytic field."""
    sq, dir_err = [], []
    for c in cells:
        if not c.valid:
            continue
        truth = expected_cell(cfg, c.d_gt).mu
        sq.append(np.degrees(np.linalg.norm(c.mu_tangent - truth)) ** 2)
        if tangent_length_to_angle(float(np.linalg.norm(truth))) >= BIAS_DIR_MIN:
            ref = image_direction(make_tangent_frame(c.d_gt), truth)
            cosang = float(np.clip(ref @ c.bias_direction_image, -1.0, 1.0))
            dir_err.append(math.degrees(math.acos(cosang)))
    return {
        "valid_cells": len(sq),
        "rms_error_deg": math.sqrt(float(np.mean(sq))) if sq else math.nan,
        "direction_cells": len(dir_err),
        "max_direction_error_deg": max(dir_err, default=math.nan),
    }


def criterion_2(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    cfg = biased_config()
    cells = run_grid(generate(cfg, threads=threads), GridConfig(), threads=threads)
    m = bias_errors(cfg, cells)
    passed = m["valid_cells"] > 0 and m["rms_error_deg"] <= BIAS_RMS_TOL and m["max_direction_error_deg"] <= BIAS_DIR_TOL
    detail = (
        f"{cfg.n_samples} samples, {m['valid_cells']} valid cells; RMS error {m['rms_error_deg']:.3f} deg; "
        f"max direction error {m['max_direction_error_deg']:.2f} deg over {m['direction_cells']} cells"
    )
    return CriterionResult(2, "biased closure (center-pointing ramp)", passed, detail, _round(m), time.perf_counter() - t0)


def criterion_4(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    g = Gaussian2D(UNIT_MU, UNIT_SIGMA)
    pts = sample(g, 0, 10_000)
    fit = robust_fit(pts, FitConfig(max_half_width=None))
    mu_err = float(np.max(np.abs(fit.gaussian.mu - UNIT_MU)))
    rel = np.abs(fit.gaussian.sigma - UNIT_SIGMA) / np.abs(UNIT_SIGMA)
    sig_err = float(np.max(rel))
    ax = eigen_axes(g)
    a, b, d = UNIT_SIGMA[0, 0], UNIT_SIGMA[0, 1], UNIT_SIGMA[1, 1]
    disc = math.sqrt((a + d) ** 2 - 4 * (a * d - b * b))
    l1, l2 = 0.5 * (a + d + disc), 0.5 * (a + d - disc)
    eig_err = max(abs(ax.lambda1 - l1), abs(ax.lambda2 - l2))
    passed = fit.converged and mu_err <= 0.05 and sig_err <= 0.05 and eig_err <= 1e-9
    detail = (
        f"max |mu error| {mu_err:.4f}, max Sigma rel. error {100 * sig_err:.2f}%, "
        f"lambda = ({ax.lambda1:.4f}, {ax.lambda2:.4f}), oracle gap {eig_err:.1e}"
    )
    m = {"mu_error": mu_err, "sigma_rel_error": sig_err, "lambda1": ax.lambda1, "lambda2": ax.lambda2, "eigen_gap": eig_err}
    return CriterionResult(4, "Gaussian fit unit oracle", passed, detail, _round(m), time.perf_counter() - t0)


def criterion_5(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    # two tiers: 2 deg in the five nearer bins, 4 deg in the five farther ones, unequal counts
    near = rng.uniform(30.0, 190.0, 700)
    far = rng.uniform(190.0, 350.0, 90)
    depths = np.concatenate([near, far])
    errors = np.concatenate([np.full(700, 2.0), np.full(90, 4.0)])
    two_tier, bins, _ = binned_subject_error(depths, errors)
    const_ok = True
    for k in range(20):
        dd = rng.uniform(20.0, 400.0, rng.integers(1, 500))
        dd[0] = rng.uniform(30.0, 350.0)
        value, _, _ = binned_subject_error(dd, np.full(len(dd), 2.0))
        const_ok &= value == 2.0
    pooled = float(np.mean(errors))
    passed = two_tier == 3.0 and bins == 10 and const_ok
    detail = f"two-tier value {two_tier!r} over {bins} bins (pooled mean would be {pooled:.4f}); constant-error invariance {'holds' if const_ok else 'broken'}"
    return CriterionResult(5, "subject-error arithmetic", passed, detail, {"two_tier": two_tier, "constant_ok": bool(const_ok)}, time.perf_counter() - t0)


def jacobian_check(n_points: int = 100, seed: int = 6) -> float:
    """Worst relative Frobenius gap between the analytic and central-difference Jacobians."""
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(2000, 2))
    hist = build_histogram(pts, FitConfig(max_half_width=None, bins=12))
    worst = 0.0
    for _ in range(n_points):
        theta = np.array([rng.uniform(0.5, 2.0), *rng.normal(0, 0.5, 2), *rng.normal(0, 0.3, 1), rng.normal(0, 0.5), *rng.normal(0, 0.3, 1)])
        _, J = model_and_jacobian(theta, hist.nodes, hist.weights)
        fd = np.empty_like(J)
        for k in range(6):
            h = 1e-6 * max(1.0, abs(theta[k]))
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            fd[:, k] = (model_and_jacobian(tp, hist.nodes, hist.weights)[0] - model_and_jacobian(tm, hist.nodes, hist.weights)[0]) / (2 * h)
        worst = max(worst, float(np.linalg.norm(J - fd) / np.linalg.norm(J)))
    return worst


def criterion_6(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    a = normalize_rows(rng.normal(size=(10_000, 3)))
    b = normalize_rows(rng.normal(size=(10_000, 3)))
    keep = np.einsum("ij,ij->i", a, b) > -0.999
    R = rotations_onto(a[keep], b[keep])
    rot_err = float(np.max(np.linalg.norm(np.einsum("nij,nj->ni", R, a[keep]) - b[keep], axis=1)))

    # tangent distortion for angles up to 5 deg around random directions
    d_gt = normalize_rows(rng.normal(size=(2000, 3)))
    theta = np.radians(rng.uniform(0.01, 5.0, 2000))
    theta[0] = math.radians(5.0)
    worst_dist = 0.0
    for g, t in zip(d_gt, theta):
        frame = make_tangent_frame(g)
        phi = rng.uniform(0, 2 * math.pi)
        v = math.cos(phi) * frame.b1 + math.sin(phi) * frame.b2
        d = math.cos(t) * g + math.sin(t) * v
        length = float(np.linalg.norm(project_to_tangent(frame, d)))
        worst_dist = max(worst_dist, abs(length - t) / t)

    uv = rng.uniform(0, 800, size=(10_000, 2))
    rt_err = float(np.max(np.abs(project_point(IDEAL_CAMERA, unproject_point(IDEAL_CAMERA, uv)) - uv)))
    jac = jacobian_check()
    passed = rot_err < 1e-9 and worst_dist <= 0.0013 and rt_err < 1e-6 and jac < 1e-5
    detail = (
        f"rotation max {rot_err:.1e}; distortion max {100 * worst_dist:.4f}%; "
        f"round trip max {rt_err:.1e} px; Jacobian rel. gap {jac:.1e}"
    )
    m = {"rotation_error": rot_err, "distortion": worst_dist, "roundtrip_px": rt_err, "jacobian_gap": jac}
    return CriterionResult(6, "geometry suite", passed, detail, {k: float(f"{v:.3e}") for k, v in m.items()}, time.perf_counter() - t0)


def _strip_manifest(path: Path) -> dict:
    doc = json.loads(path.read_text())
    doc.pop("wall_time_s", None)
    return doc


def _tree_digests(root: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file() and not p.name.endswith("manifest.json")}


def determinism_runs(work: Path, thread_counts=(1, 4)) -> dict[str, bool]:
    """Run every subcommand once per thread count and compare output bytes."""
    from .cli import run

    cfg = SynthConfig(n_subjects=12, samples_per_subject=1500, bias=dict(RAMP), outlier_rate=0.02)
    cfg_path = work / "synth.json"
    cfg_path.write_text(cfg.to_json())
    analysis = work / "analysis.json"
    analysis.write_text(json.dumps({"grid": {"step_deg": 10.0, "min_cell_samples": 100}}))

    def go(argv):
        with contextlib.redirect_stdout(io.StringIO()):
            status, _ = run(argv)
        return status

    results: dict[str, bool] = {}
    runs: dict[str, list] = {}
    for t in thread_counts:
        d = work / f"synth{t}"
        d.mkdir()
        go(["synth", "--config", str(cfg_path), "--out", str(d / "d.jsonl"), "--meta", str(d / "m.jsonl"), "--threads", str(t)])
        runs.setdefault("synth", []).append((_tree_digests(d), _strip_manifest(d / "d.manifest.json")))
    results["synth"] = _same(runs["synth"])

    samples, meta = work / "synth1" / "d.jsonl", work / "synth1" / "m.jsonl"
    io_args = ["--samples", str(samples), "--meta", str(meta), "--config", str(analysis)]
    for cmd in ("validate", "subject-error", "depth-curve", "directional"):
        for t in thread_counts:
            out = work / f"{cmd}{t}"
            go([cmd, *io_args, "--out", str(out), "--threads", str(t)])
            runs.setdefault(cmd, []).append((_tree_digests(out), _strip_manifest(out / "manifest.json")))
        results[cmd] = _same(runs[cmd])
    for t in thread_counts:
        out = work / f"selftest{t}"
        go(["selftest", "--only", "5", "--out", str(out), "--threads", str(t)])
        runs.setdefault("selftest", []).append((_tree_digests(out), _strip_manifest(out / "manifest.json")))
    results["selftest"] = _same(runs["selftest"])
    return results


def _same(items: list) -> bool:
    return bool(items[0][0]) and all(x == items[0] for x in items[1:])


def criterion_7(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        res = determinism_runs(Path(tmp), (1, max(2, threads), 4))
    bad = sorted(k for k, ok in res.items() if not ok)
    detail = f"{len(res)} subcommands compared across thread counts; " + (f"differences in {', '.join(bad)}" if bad else "all byte-identical")
    return CriterionResult(7, "CLI determinism", not bad, detail, res, time.perf_counter() - t0)


def depth_config() -> SynthConfig:
    return SynthConfig(depth_coupling=DEPTH_KNOTS, depth_distribution="uniform")


def depth_shape(curve) -> dict:
    plateau_bins = [b for b in curve if b.lo_cm >= 150.0 and b.count > 0]
    plateau = float(np.mean([b.mean_deg for b in plateau_bins]))
    spread = max(abs(b.mean_deg / plateau - 1.0) for b in plateau_bins)
    at50 = next(b for b in curve if b.lo_cm <= 50.0 < b.hi_cm)
    return {"plateau_deg": plateau, "plateau_max_dev": spread, "elevation_at_50": at50.mean_deg / plateau - 1.0, "bin_50": [at50.lo_cm, at50.hi_cm]}


def criterion_8(threads: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    ds = generate(depth_config(), threads=threads)
    # 20 cm bins from 40 cm so that one bin is centred on 50 cm
    m = depth_shape(depth_error_curve(ds, 15, (40.0, 340.0)))
    passed = m["plateau_max_dev"] <= 0.03 and abs(m["elevation_at_50"] - 0.40) <= 0.05
    detail = (
        f"plateau {m['plateau_deg']:.3f} deg, max deviation beyond 150 cm {100 * m['plateau_max_dev']:.2f}%; "
        f"elevation at 50 cm {100 * m['elevation_at_50']:.1f}%"
    )
    return CriterionResult(8, "depth-curve shape", passed, detail, _round(m), time.perf_counter() - t0)


CRITERIA: dict[int, Callable[..., CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
}


def run_all(only=None, threads: int = 1) -> list[CriterionResult]:
    numbers = sorted(CRITERIA) if not only else list(only)
    unknown = [n for n in numbers if n not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria: {unknown}")
    out = []
    for n in numbers:
        t0 = time.perf_counter()
        r = CRITERIA[n](threads=threads)
        r.seconds = time.perf_counter() - t0 if n != 1 else r.seconds
        out.append(r)
    return out
