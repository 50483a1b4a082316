from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazestats.errors import DegenerateInput, InsufficientData
from gazestats.gaussian2d import (
    FitConfig,
    Gaussian2D,
    build_histogram,
    density,
    eigen_axes,
    gaussian_from_params,
    model_and_jacobian,
    moments_estimate,
    params_from_gaussian,
    robust_fit,
    sample,
)
from gazestats.selftest import jacobian_check

MU = np.array([1.0, 1.0])
SIGMA = np.array([[0.7, 0.8], [0.8, 2.5]])
G = Gaussian2D(MU, SIGMA)


def test_gaussian_validation():
    with pytest.raises(ValueError):
        Gaussian2D(np.zeros(2), np.array([[1.0, 0.5], [0.4, 1.0]]))
    with pytest.raises(ValueError):
        Gaussian2D(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_density_at_mode():
    g = Gaussian2D(np.zeros(2), np.eye(2))
    assert density(g, np.zeros(2)) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1000, 2)) * 3
    assert np.all(density(G, MU) >= density(G, x))


def test_density_integrates_to_one():
    g = Gaussian2D(np.zeros(2), np.eye(2))
    xs = np.linspace(-6, 6, 1201)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    vals = density(g, np.stack([X, Y], axis=-1))
    h = xs[1] - xs[0]
    assert np.trapezoid(np.trapezoid(vals, dx=h, axis=1), dx=h) == pytest.approx(1.0, abs=1e-3)


def test_minor_axis_marginal_is_normal():
    ax = eigen_axes(G)
    t = np.linspace(-12, 12, 4801)
    s = np.linspace(-20, 20, 8001)
    T, S = np.meshgrid(t, s, indexing="ij")
    pts = MU + T[..., None] * ax.minor_axis + S[..., None] * ax.major_axis
    marginal = np.trapezoid(density(G, pts), s, axis=1)
    marginal /= np.trapezoid(marginal, t)
    sd = math.sqrt(ax.lambda2)
    ref = np.exp(-0.5 * (t / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    assert np.max(np.abs(marginal - ref)) < 1e-6


def test_moments_examples():
    g = moments_estimate(np.array([[0, 0], [2, 0], [0, 2], [2, 2]], dtype=float))
    np.testing.assert_allclose(g.mu, [1, 1], atol=1e-15)
    np.testing.assert_allclose(g.sigma, np.eye(2), atol=1e-15)
    with pytest.raises(DegenerateInput):
        moments_estimate(np.ones((10, 2)))
    with pytest.raises(DegenerateInput):
        moments_estimate(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))


def test_moments_recover_large_sample():
    g = moments_estimate(sample(G, 11, 10**6))
    assert np.max(np.abs(g.mu - MU)) < 0.005
    assert np.max(np.abs(g.sigma - SIGMA) / np.abs(SIGMA)) < 0.01


def test_eigen_axes_matches_quadratic_formula():
    a, b, d = 0.7, 0.8, 2.5
    disc = math.sqrt((a + d) ** 2 - 4 * (a * d - b * b))
    ax = eigen_axes(G)
    assert abs(ax.lambda1 - 0.5 * (a + d + disc)) < 1e-9
    assert abs(ax.lambda2 - 0.5 * (a + d - disc)) < 1e-9
    assert ax.lambda1 == pytest.approx(2.8042, abs=5e-5)
    assert ax.lambda2 == pytest.approx(0.3958, abs=5e-5)
    assert not ax.isotropic


def test_eigen_axes_isotropic():
    ax = eigen_axes(Gaussian2D(np.zeros(2), np.eye(2)))
    assert ax.lambda1 == 1.0 and ax.lambda2 == 1.0 and ax.isotropic
    assert abs(ax.major_axis @ ax.minor_axis) < 1e-15


pd_matrices = st.tuples(
    st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 3), st.floats(0.05, 3)
).map(lambda t: (lambda R, D: R @ D @ R.T)(
    np.linalg.qr(np.array([[t[0], t[1]], [t[2], 1.0]]) + np.eye(2) * 4)[0], np.diag([t[3], t[4]])
))


@settings(max_examples=300, deadline=None)
@given(pd_matrices)
def test_eigen_residuals_and_reconstruction(sigma):
    sigma = 0.5 * (sigma + sigma.T)
    ax = eigen_axes(Gaussian2D(np.zeros(2), sigma))
    for lam, v in ((ax.lambda1, ax.major_axis), (ax.lambda2, ax.minor_axis)):
        assert np.linalg.norm(sigma @ v - lam * v) < 1e-9
    recon = ax.lambda1 * np.outer(ax.major_axis, ax.major_axis) + ax.lambda2 * np.outer(ax.minor_axis, ax.minor_axis)
    np.testing.assert_allclose(recon, sigma, atol=1e-9)
    assert ax.lambda1 >= ax.lambda2 > 0


def test_sample_determinism_and_vanishing_variance():
    assert sample(G, 5, 1000).tobytes() == sample(G, 5, 1000).tobytes()
    pts = sample(Gaussian2D(np.array([5.0, 5.0]), 1e-12 * np.eye(2)), 0, 1000)
    assert np.max(np.abs(pts - 5.0)) < 1e-5


def test_param_round_trip():
    theta = params_from_gaussian(G, 2.0)
    g = gaussian_from_params(theta)
    np.testing.assert_allclose(g.mu, MU)
    np.testing.assert_allclose(g.sigma, SIGMA, atol=1e-14)


def test_jacobian_matches_central_differences():
    assert jacobian_check(100) < 1e-5


def test_model_is_bin_average_of_density():
    hist = build_histogram(sample(G, 0, 5000), FitConfig(max_half_width=None, bins=10, quadrature_order=8))
    model, _ = model_and_jacobian(params_from_gaussian(G), hist.nodes, hist.weights)
    h = 2 * hist.half_width / 10
    # integral over all bins equals the probability mass inside the square
    inside = model.sum() * h * h
    assert 0.95 < inside <= 1.0


def test_robust_fit_unit_oracle():
    fit = robust_fit(sample(G, 0, 10_000), FitConfig(max_half_width=None))
    assert fit.converged
    assert np.max(np.abs(fit.gaussian.mu - MU)) <= 0.05
    assert np.max(np.abs(fit.gaussian.sigma - SIGMA) / np.abs(SIGMA)) <= 0.05


def test_robust_fit_with_uniform_outliers():
    rng = np.random.default_rng(1)
    clean = sample(G, 0, 10_000)
    outliers = rng.uniform(-10, 10, size=(500, 2))
    pts = np.vstack([clean, outliers])
    fit = robust_fit(pts, FitConfig(max_half_width=None))
    mom = moments_estimate(pts)
    assert np.max(np.abs(fit.gaussian.mu - MU)) <= 0.05
    assert np.max(np.abs(fit.gaussian.sigma - SIGMA) / np.abs(SIGMA)) <= 0.05
    drift_fit = np.linalg.norm(fit.gaussian.sigma - SIGMA)
    drift_mom = np.linalg.norm(mom.sigma - SIGMA)
    assert drift_mom > 3 * drift_fit


def test_robust_fit_insufficient():
    with pytest.raises(InsufficientData):
        robust_fit(sample(G, 0, 10))


def test_robust_fit_bit_deterministic():
    pts = sample(G, 4, 3000)
    a = robust_fit(pts, FitConfig(max_half_width=None))
    b = robust_fit(pts.copy(), FitConfig(max_half_width=None))
    assert a.gaussian.mu.tobytes() == b.gaussian.mu.tobytes()
    assert a.gaussian.sigma.tobytes() == b.gaussian.sigma.tobytes()
    assert a.iterations == b.iterations and a.final_cost == b.final_cost


def test_iteration_cap_reports_not_converged():
    fit = robust_fit(sample(G, 0, 2000), FitConfig(max_half_width=None, max_iterations=1))
    assert fit.iterations <= 1
    assert not fit.converged


def test_fit_config_round_trip_and_validation():
    cfg = FitConfig(bins=30)
    assert FitConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        FitConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        FitConfig(bins=1)
