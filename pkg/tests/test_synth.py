from __future__ import annotations

import math

import numpy as np
import pytest

from gazestats.errors import ConfigError
from gazestats.geometry import angles_from_direction, direction_from_angles, make_tangent_frame, project_to_tangent
from gazestats.metrics import sample_errors
from gazestats.synth import (
    SynthConfig,
    bias_field,
    covariance_field,
    depth_multiplier,
    expected_cell,
    generate,
)

ISO3 = {"kind": "isotropic", "sigma_deg": 3.0}


def test_rayleigh_mean_error():
    ds = generate(SynthConfig(seed=4, n_subjects=20, samples_per_subject=5000, covariance=ISO3))
    mean = float(np.mean(sample_errors(ds.p_gt, ds.d_dev)))
    assert mean == pytest.approx(3.0 * math.sqrt(math.pi / 2), rel=0.01)  # 3.76 deg


def test_constant_bias_without_noise():
    cfg = SynthConfig(
        n_subjects=2, samples_per_subject=2000,
        bias={"kind": "constant", "vector_deg": [3.0, 4.0]},
        covariance={"kind": "isotropic", "sigma_deg": 1e-6},
    )
    errs = sample_errors(generate(cfg).p_gt, generate(cfg).d_dev)
    assert np.max(np.abs(errs - 5.0)) < 0.01


def test_seed_determinism_and_threads():
    cfg = SynthConfig(seed=9, n_subjects=6, samples_per_subject=300, outlier_rate=0.1)
    a, b, c = generate(cfg), generate(cfg), generate(cfg, threads=3)
    assert a == b == c
    assert a.d_dev.tobytes() == c.d_dev.tobytes()
    assert generate(SynthConfig(seed=10, n_subjects=6, samples_per_subject=300)) != a


def test_outlier_rate_only_replaces_estimates():
    base = SynthConfig(seed=1, n_subjects=3, samples_per_subject=2000)
    clean = generate(base)
    dirty = generate(SynthConfig.from_dict({**base.to_dict(), "outlier_rate": 0.05}))
    np.testing.assert_array_equal(clean.p_gt, dirty.p_gt)
    changed = np.any(clean.d_dev != dirty.d_dev, axis=1)
    assert 0.03 < changed.mean() < 0.07
    ang = np.degrees(np.arccos(np.clip(np.sum(dirty.d_dev * dirty.d_gt, axis=1), -1, 1)))
    assert np.all(ang[changed] <= 20.0 + 1e-9)


def test_tangent_errors_are_the_drawn_gaussian():
    # projecting estimates into their own frames must give N(bias, Sigma)
    cfg = SynthConfig(seed=2, n_subjects=10, samples_per_subject=3000, field_half_extent_deg=1.0, center_bias_sigma_deg=None)
    ds = generate(cfg)
    f = make_tangent_frame(direction_from_angles(0, 0))
    pts = project_to_tangent(f, ds.d_dev)  # small field: frames nearly identical
    cov = np.cov(pts.T, bias=True)
    expected = expected_cell(cfg, f.d_gt).sigma
    assert np.max(np.abs(cov - expected) / expected.max()) < 0.05


def test_expected_cell():
    d = direction_from_angles(10, -20)
    cfg = SynthConfig()
    g = expected_cell(cfg, d)
    np.testing.assert_array_equal(g.mu, [0, 0])
    np.testing.assert_array_equal(g.sigma, covariance_field(cfg, d)[0])
    s4, s3 = math.sin(math.radians(4)), math.sin(math.radians(3))
    np.testing.assert_allclose(g.sigma, np.diag([s4**2, s3**2]), rtol=1e-15)
    two = SynthConfig(subject_scale={"kind": "discrete", "values": [1.0, 2.0]})
    np.testing.assert_allclose(expected_cell(two, d).sigma, 2.5 * covariance_field(cfg, d)[0], rtol=1e-15)


def test_center_ramp_field():
    cfg = SynthConfig(bias={"kind": "center_ramp", "base_deg": 0.3, "peak_deg": 2.5, "ramp_start_deg": -20, "ramp_end_deg": -40, "taper_deg": 5})
    d = direction_from_angles([0, 0, 20, 0, 30], [0, 2.5, 10, -40, -45])
    b = bias_field(cfg, d)
    mags = np.degrees(np.arcsin(np.linalg.norm(b, axis=1)))
    assert mags[0] == 0.0
    assert mags[1] == pytest.approx(0.15, abs=1e-3)  # half-way into the central taper
    assert mags[2] == pytest.approx(0.3, abs=1e-9)
    assert mags[3] == pytest.approx(2.5, abs=1e-9) and mags[4] == pytest.approx(2.5, abs=1e-9)
    # every bias vector points toward the optical axis
    for di, bi in zip(d[1:], b[1:]):
        f = make_tangent_frame(di)
        toward = project_to_tangent(f, np.array([0.0, 0.0, 1.0]))
        assert bi @ toward / (np.linalg.norm(bi) * np.linalg.norm(toward)) == pytest.approx(1.0, abs=1e-12)


def test_quadrant_covariance():
    cfg = SynthConfig(covariance={"kind": "quadrant", "sigma_h_deg": 4, "sigma_v_deg": 3,
                                  "factors": {"upper_left": 1.0, "upper_right": 1.0, "lower_left": 1.0, "lower_right": 2.0}})
    cov = covariance_field(cfg, direction_from_angles([-45, 45], [45, -45]))
    np.testing.assert_allclose(cov[1], 4 * cov[0])


def test_depth_multiplier():
    cfg = SynthConfig(depth_coupling=((50, 1.4), (150, 1.0)))
    np.testing.assert_allclose(depth_multiplier(cfg, [30, 50, 100, 150, 300]), [1.4, 1.4, 1.2, 1.0, 1.0])


def test_config_round_trip_and_errors(tmp_path):
    cfg = SynthConfig(seed=3, depth_coupling=((50, 1.4), (150, 1.0)), subject_scale={"kind": "lognormal", "sigma_log": 0.3})
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert SynthConfig.from_json(path) == cfg
    for bad in ({"bogus": 1}, {"outlier_rate": 2}, {"bias": {"kind": "spiral"}},
                {"covariance": {"kind": "isotropic"}}, {"depth_coupling": [[150, 1.0], [50, 1.4]]},
                {"subject_scale": {"kind": "discrete", "values": [1, 2], "probs": [0.3, 0.3]}}):
        with pytest.raises(ConfigError):
            SynthConfig.from_dict({**cfg.to_dict(), **bad})
    path.write_text("{oops")
    with pytest.raises(ConfigError):
        SynthConfig.from_json(path)


def test_meta_and_layout():
    ds = generate(SynthConfig(n_subjects=3, samples_per_subject=10))
    assert sorted(ds.meta) == ["S0000", "S0001", "S0002"]
    assert list(ds.environment[:10]) == ["indoor"] * 5 + ["outdoor"] * 5
    h, v = angles_from_direction(ds.d_gt)
    assert np.all(np.abs(h) <= 45) and np.all(np.abs(v) <= 45)
    assert np.all((ds.depth_cm >= 30 - 1e-9) & (ds.depth_cm <= 350 + 1e-9))
