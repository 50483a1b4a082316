from __future__ import annotations

import math

import numpy as np
import pytest

from gazestats.dataio import Dataset
from gazestats.directional import (
    GridConfig,
    axes_to_image,
    cell_stats,
    grid_from_csv,
    grid_to_csv,
    image_direction,
    run_grid,
    select_and_correct,
    select_and_correct_arrays,
)
from gazestats.gaussian2d import Gaussian2D, sample
from gazestats.geometry import (
    angles_between,
    angles_from_direction,
    direction_from_angles,
    make_tangent_frame,
    normalize_rows,
    project_to_tangent,
    tangent_bases,
)
from gazestats.synth import SynthConfig, generate

S3, S4 = math.sin(math.radians(3)), math.sin(math.radians(4))


def _lift(frame, pts):
    """Tangent-plane points -> unit vectors (orthographic lift)."""
    return pts[:, :1] * frame.b1 + pts[:, 1:] * frame.b2 + np.sqrt(1 - np.sum(pts**2, axis=1))[:, None] * frame.d_gt


def _perfect(ds):
    return Dataset(ds.subject_id, ds.session_id, ds.device_id, ds.environment, ds.p_gt, ds.d_gt, ds.meta)


def test_grid_config_lattice():
    cfg = GridConfig()
    assert len(cfg.lattice()) == 361
    assert cfg.lattice()[0] == (-45.0, -45.0) and cfg.lattice()[1] == (-40.0, -45.0)
    with pytest.raises(ValueError):
        GridConfig(step_deg=0)
    with pytest.raises(ValueError):
        GridConfig(neighborhood_radius_deg=20)
    assert GridConfig.from_dict(cfg.to_dict()) == cfg


def test_select_identity_and_perfect_estimator():
    rng = np.random.default_rng(0)
    d = direction_from_angles(10, 5)
    d_gt_all = normalize_rows(d + 0.03 * rng.normal(size=(500, 3)))
    d_gt_all[0] = d
    d_dev = normalize_rows(d_gt_all + 0.01 * rng.normal(size=(500, 3)))
    corrected, idx = select_and_correct_arrays(d_gt_all, d_dev, d, 5.0)
    assert idx[0] == 0
    np.testing.assert_array_equal(corrected[0], d_dev[0])
    assert np.all(angles_between(d_gt_all[idx], d) < 5.0)
    assert len(idx) == int(np.sum(angles_between(d_gt_all, d) < 5.0))
    perfect, _ = select_and_correct_arrays(d_gt_all, d_gt_all, d, 5.0)
    assert np.max(np.abs(perfect - d)) < 1e-12
    empty, idx = select_and_correct_arrays(d_gt_all, d_dev, -d, 5.0)
    assert empty.shape == (0, 3) and idx.size == 0
    with pytest.raises(ValueError):
        select_and_correct_arrays(d_gt_all, d_dev, d, 0.0)


def test_correction_preserves_constant_bias():
    cfg = SynthConfig(
        seed=1, n_subjects=4, samples_per_subject=5000,
        bias={"kind": "constant", "vector_deg": [1.5, -1.0]},
        covariance={"kind": "isotropic", "sigma_deg": 1e-4},
    )
    ds = generate(cfg)
    d = direction_from_angles(0, 0)
    corrected = select_and_correct(ds, d, 5.0)
    assert len(corrected) > 100
    offsets = project_to_tangent(make_tangent_frame(d), corrected)
    expected = np.array([1.5, -1.0]) / math.hypot(1.5, -1.0) * math.sin(math.radians(math.hypot(1.5, -1.0)))
    # neighbours' frames differ slightly from the cell frame; the offset must stay close to b
    assert np.max(np.linalg.norm(offsets - expected, axis=1)) < math.radians(0.05)


def test_cell_stats_recovers_anisotropic_gaussian():
    d = direction_from_angles(15, -10)
    f = make_tangent_frame(d)
    pts = sample(Gaussian2D(np.zeros(2), np.diag([S4**2, S3**2])), 7, 20_000)
    cell = cell_stats(d, _lift(f, pts))
    assert cell.valid and cell.reason == ""
    assert cell.bias_angle < 0.2
    assert cell.sigma_minor_deg == pytest.approx(3.0, abs=0.1)
    assert cell.sigma_major_deg == pytest.approx(4.0, abs=0.1)
    assert cell.sigma_major_deg >= cell.sigma_minor_deg
    assert cell.mean_sample_error_deg > 0


def test_cell_stats_invalid_cases():
    d = direction_from_angles(0, 0)
    f = make_tangent_frame(d)
    few = _lift(f, sample(Gaussian2D(np.zeros(2), S3**2 * np.eye(2)), 0, 50))
    cell = cell_stats(d, few, GridConfig(min_cell_samples=200))
    assert not cell.valid and cell.reason == "insufficient_samples" and cell.n_samples == 50
    exact = np.tile(d, (500, 1))
    cell = cell_stats(d, exact)
    assert not cell.valid and cell.reason == "degenerate"
    assert cell.mean_sample_error_deg == 0.0


def test_image_directions():
    f = make_tangent_frame((0, 0, 1))
    np.testing.assert_allclose(image_direction(f, [1, 0]), [1, 0], atol=1e-12)
    rng = np.random.default_rng(2)
    for _ in range(20):
        phi = rng.uniform(0, 2 * math.pi)
        major = np.array([math.cos(phi), math.sin(phi)])
        minor = np.array([-major[1], major[0]])
        mj, mn, _ = axes_to_image(f, major, minor, major)
        assert abs(mj @ mn) < 1e-6
    for az, el in ((30, 20), (-40, -40), (5, 0)):
        fr = make_tangent_frame(direction_from_angles(az, el))
        v = rng.normal(size=2)
        a = image_direction(fr, v, 1e-4)
        b = image_direction(fr, v, 5e-5)
        assert np.linalg.norm(a - b) < 1e-6


def test_orthogonality_deviation_grows_off_center():
    f0 = make_tangent_frame(direction_from_angles(0, 0))
    f1 = make_tangent_frame(direction_from_angles(40, 40))
    major = np.array([math.cos(0.3), math.sin(0.3)])
    minor = np.array([-major[1], major[0]])
    dev = []
    for f in (f0, f1):
        mj, mn, _ = axes_to_image(f, major, minor, major)
        dev.append(abs(math.degrees(math.acos(mj @ mn)) - 90))
    assert dev[0] < 1e-6 < dev[1]


@pytest.fixture(scope="module")
def grid_data():
    cfg = SynthConfig(seed=5, n_subjects=20, samples_per_subject=1500)
    ds = generate(cfg)
    gcfg = GridConfig(step_deg=15.0, min_cell_samples=150)
    return ds, gcfg, run_grid(ds, gcfg)


def test_run_grid_order_threads_and_record_order(grid_data):
    ds, gcfg, cells = grid_data
    assert [(c.az_deg, c.el_deg) for c in cells] == gcfg.lattice()
    assert any(c.valid for c in cells)
    for c in cells:
        if c.valid:
            assert c.sigma_major_deg >= c.sigma_minor_deg
            assert c.n_samples >= gcfg.min_cell_samples and c.fit.converged
    base = grid_to_csv(cells)
    assert grid_to_csv(run_grid(ds, gcfg, threads=4)) == base
    perm = np.random.default_rng(0).permutation(len(ds))
    assert grid_to_csv(run_grid(ds.subset(perm), gcfg)) == base


def test_upper_hemisphere_only(grid_data):
    ds, gcfg, _ = grid_data
    _, el = angles_from_direction(ds.d_gt)
    upper = ds.subset(el > 0)
    cells = run_grid(upper, gcfg)
    low = [c for c in cells if c.el_deg <= -gcfg.neighborhood_radius_deg]
    assert low and not any(c.valid for c in low)
    assert all(c.reason == "insufficient_samples" for c in low)


def test_perfect_estimator(grid_data):
    ds, gcfg, _ = grid_data
    cells = run_grid(_perfect(ds), gcfg)
    for c in cells:
        assert (not c.valid and c.reason in ("degenerate", "insufficient_samples")) or (
            c.bias_angle <= 0.01 and c.sigma_major_deg < 0.01
        )


def test_grid_csv_round_trip(grid_data):
    _, _, cells = grid_data
    rows = grid_from_csv(grid_to_csv(cells))
    assert len(rows) == len(cells)
    header = grid_to_csv(cells).splitlines()[0].split(",")
    assert header[:14] == [
        "az_deg", "el_deg", "n", "valid", "bias_deg", "bias_dir_u", "bias_dir_v", "sigma_major_deg",
        "sigma_minor_deg", "major_u", "major_v", "minor_u", "minor_v", "mean_err_deg",
    ]
    for r, c in zip(rows, cells):
        assert r["n"] == c.n_samples and bool(r["valid"]) == c.valid
        if c.valid:
            assert r["sigma_major_deg"] == pytest.approx(c.sigma_major_deg, abs=1e-6)
        else:
            assert math.isnan(r["bias_deg"]) and r["reason"] == c.reason


def test_tangent_bases_batch_matches_frames():
    d = normalize_rows(np.random.default_rng(3).normal(size=(50, 3)))
    b1, b2 = tangent_bases(d)
    for i in range(50):
        f = make_tangent_frame(d[i])
        np.testing.assert_allclose(b1[i], f.b1, atol=1e-15)
        np.testing.assert_allclose(b2[i], f.b2, atol=1e-15)
