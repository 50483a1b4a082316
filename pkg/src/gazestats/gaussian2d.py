"""2D Gaussian distributions and a robust histogram fit.

The fit follows the usual picture of gaze scatter in a tangent plane: bin the
points into a normalized 2D histogram, then fit ``A * N(x; mu, Sigma)`` to the
bin densities by Levenberg-Marquardt on a Cauchy-robustified least-squares
objective. ``Sigma`` is parameterized through its lower-triangular square root
``L = [[exp(a), 0], [c, exp(b)]]`` so every iterate is positive definite.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, DegenerateInput, InsufficientData

_LOG_2PI = math.log(2.0 * math.pi)
# chi-square(2) 99.9% quantile, used for the inlier diagnostic
_INLIER_MAHAL2 = -2.0 * math.log(1e-3)


@dataclass(frozen=True)
class Gaussian2D:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=float).reshape(2)
        sigma = np.asarray(self.sigma, dtype=float).reshape(2, 2)
        if abs(sigma[0, 1] - sigma[1, 0]) > 1e-12 * max(1.0, np.abs(sigma).max()):
            raise ValueError("covariance must be symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if not (sigma[0, 0] > 0 and np.linalg.det(sigma) > 0):
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class AxisStats:
    lambda1: float
    lambda2: float
    major_axis: np.ndarray
    minor_axis: np.ndarray
    isotropic: bool = False

    @property
    def sigma_major(self) -> float:
        return math.sqrt(self.lambda1)

    @property
    def sigma_minor(self) -> float:
        return math.sqrt(self.lambda2)


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`robust_fit`. Round-trips through ``to_dict``/``from_dict``."""

    bins: int = 40
    min_samples: int = 200
    max_iterations: int = 100
    gtol: float = 1e-8
    ftol: float = 1e-12
    xtol: float = 1e-10
    # None disables clipping of the histogram half-width
    max_half_width: float | None = math.sin(math.radians(15.0))
    # 2.385 (95% Gaussian efficiency) x 1.4826 (MAD -> sigma)
    cauchy_scale_factor: float = 3.536
    cauchy_refreshes: int = 1
    quadrature_order: int = 3
    # "poisson" standardizes bin residuals by their counting noise; "none" fits raw densities
    residual_scaling: str = "poisson"

    def __post_init__(self) -> None:
        if self.bins < 4:
            raise ConfigError("bins must be >= 4")
        if self.min_samples < 3:
            raise ConfigError("min_samples must be >= 3")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.max_half_width is not None and not self.max_half_width > 0:
            raise ConfigError("max_half_width must be positive or None")
        if not self.cauchy_scale_factor > 0:
            raise ConfigError("cauchy_scale_factor must be positive")
        if self.quadrature_order < 1:
            raise ConfigError("quadrature_order must be >= 1")
        if self.residual_scaling not in ("poisson", "none"):
            raise ConfigError("residual_scaling must be 'poisson' or 'none'")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown FitConfig keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class FitResult:
    gaussian: Gaussian2D
    converged: bool
    iterations: int
    final_cost: float
    inlier_fraction: float
    amplitude: float = 1.0
    cauchy_scale: float = float("nan")
    termination: str = ""


def density(g: Gaussian2D, x) -> np.ndarray | float:
    """Probability density of ``g`` at point(s) ``x`` (shape ``(2,)`` or ``(n, 2)``)."""
    x = np.asarray(x, dtype=float)
    d = x - g.mu
    inv = np.linalg.inv(g.sigma)
    q = np.einsum("...i,ij,...j->...", d, inv, d)
    p = np.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(np.linalg.det(g.sigma)))
    return float(p) if p.ndim == 0 else p


def moments_estimate(points) -> Gaussian2D:
    """Sample mean and 1/n (maximum-likelihood) covariance."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(pts)}")
    mu = pts.mean(axis=0)
    d = pts - mu
    sigma = d.T @ d / len(pts)
    ev = np.linalg.eigvalsh(sigma)
    if not ev[1] > 0 or ev[0] <= 1e-12 * ev[1]:
        raise DegenerateInput("scatter is rank-deficient")
    return Gaussian2D(mu, sigma)


def eigen_axes(g: Gaussian2D) -> AxisStats:
    """Closed-form eigen-decomposition of the covariance (``lambda1 >= lambda2``).

    The major axis is reported with a non-negative x component; the minor axis
    is the major axis rotated by +90 degrees.
    """
    a, b, d = g.sigma[0, 0], g.sigma[0, 1], g.sigma[1, 1]
    half_gap = math.hypot(0.5 * (a - d), b)
    lam1 = 0.5 * (a + d) + half_gap
    # det / lam1 avoids cancellation for the small root; clamp keeps the ordering under rounding
    lam2 = min((a * d - b * b) / lam1, lam1)
    if half_gap <= 1e-12 * lam1:
        return AxisStats(lam1, lam2, np.array([1.0, 0.0]), np.array([0.0, 1.0]), isotropic=True)
    theta = 0.5 * math.atan2(2.0 * b, a - d)
    major = np.array([math.cos(theta), math.sin(theta)])
    if major[0] < 0 or (major[0] == 0 and major[1] < 0):
        major = -major
    minor = np.array([-major[1], major[0]])
    return AxisStats(lam1, lam2, major, minor, isotropic=False)


def sample(g: Gaussian2D, seed, n: int) -> np.ndarray:
    """``n`` draws from ``g`` via the Cholesky factor; deterministic for a given seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    L = np.linalg.cholesky(g.sigma)
    return g.mu + z @ L.T


# -- histogram fit ---------------------------------------------------------


@dataclass(frozen=True)
class Histogram2D:
    """Normalized histogram plus the quadrature nodes used to bin-average the model."""

    centers: np.ndarray  # (nbins, 2)
    density: np.ndarray  # (nbins,) counts / (n_total * bin_area)
    counts: np.ndarray
    nodes: np.ndarray  # (nbins, q*q, 2)
    weights: np.ndarray  # (q*q,) sums to 1
    half_width: float
    n_total: int
    n_inside: int = field(default=0)


def build_histogram(points: np.ndarray, cfg: FitConfig) -> Histogram2D:
    """Square histogram centred on the origin, half-width ``max |p|`` clipped per ``cfg``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    half = float(np.max(np.linalg.norm(pts, axis=1)))
    if cfg.max_half_width is not None:
        half = min(half, cfg.max_half_width)
    if not half > 0:
        raise DegenerateInput("all points sit at the origin")
    nb = cfg.bins
    edges = np.linspace(-half, half, nb + 1)
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=[edges, edges])
    h = edges[1] - edges[0]
    mids = 0.5 * (edges[:-1] + edges[1:])
    cx, cy = np.meshgrid(mids, mids, indexing="ij")
    centers = np.column_stack([cx.ravel(), cy.ravel()])

    xq, wq = np.polynomial.legendre.leggauss(cfg.quadrature_order)
    ox, oy = np.meshgrid(0.5 * h * xq, 0.5 * h * xq, indexing="ij")
    offsets = np.column_stack([ox.ravel(), oy.ravel()])
    weights = np.outer(wq, wq).ravel() / 4.0
    nodes = centers[:, None, :] + offsets[None, :, :]

    counts = counts.ravel()
    return Histogram2D(
        centers=centers,
        density=counts / (len(pts) * h * h),
        counts=counts,
        nodes=nodes,
        weights=weights,
        half_width=half,
        n_total=len(pts),
        n_inside=int(counts.sum()),
    )


def params_from_gaussian(g: Gaussian2D, amplitude: float = 1.0) -> np.ndarray:
    L = np.linalg.cholesky(g.sigma)
    return np.array([amplitude, g.mu[0], g.mu[1], math.log(L[0, 0]), L[1, 0], math.log(L[1, 1])])


def gaussian_from_params(theta: np.ndarray) -> Gaussian2D:
    _, m1, m2, a, c, b = theta
    L = np.array([[math.exp(a), 0.0], [c, math.exp(b)]])
    return Gaussian2D(np.array([m1, m2]), L @ L.T)


def model_and_jacobian(theta: np.ndarray, nodes: np.ndarray, weights: np.ndarray):
    """Bin-averaged ``A * N`` and its Jacobian w.r.t. ``(A, mu1, mu2, a, c, b)``."""
    A, m1, m2, a, c, b = theta
    ea, eb = math.exp(-a), math.exp(-b)
    u1 = nodes[..., 0] - m1
    u2 = nodes[..., 1] - m2
    z1 = u1 * ea
    z2 = (u2 - c * z1) * eb
    pdf = np.exp(-0.5 * (z1 * z1 + z2 * z2) - a - b - _LOG_2PI)

    # d(log pdf)/d(theta_k) = -z1 dz1 - z2 dz2 (- 1 for a and b)
    dlog = np.empty((6,) + pdf.shape)
    dlog[1] = z1 * ea - z2 * c * ea * eb
    dlog[2] = z2 * eb
    dlog[3] = z1 * z1 - z2 * c * z1 * eb - 1.0
    dlog[4] = z2 * z1 * eb
    dlog[5] = z2 * z2 - 1.0

    base = pdf @ weights
    J = np.empty((pdf.shape[0], 6))
    J[:, 0] = base
    J[:, 1:] = A * ((dlog[1:] * pdf) @ weights).T
    return A * base, J


def cauchy_cost(r: np.ndarray, c: float) -> float:
    return float(0.5 * c * c * np.sum(np.log1p((r / c) ** 2)))


def _cauchy_scale(r: np.ndarray, counts: np.ndarray, factor: float) -> float:
    occupied = counts > 0
    sel = np.abs(r[occupied]) if occupied.any() else np.abs(r)
    c = factor * float(np.median(sel))
    if not c > 0:
        c = factor * float(np.max(np.abs(r))) or 1e-12
    return c


def _residual_scale(model: np.ndarray, hist: Histogram2D, how: str) -> np.ndarray:
    """Per-bin multiplier applied to ``model - observed`` before the loss."""
    if how == "none":
        return np.ones_like(model)
    # density -> expected count factor; at least one expected count per bin
    k = hist.n_total * (2.0 * hist.half_width / math.isqrt(len(model))) ** 2
    return np.sqrt(k / np.maximum(k * np.abs(model), 1.0))


def _lm(theta, hist: Histogram2D, s: np.ndarray, c: float, cfg: FitConfig, budget: int):
    """Levenberg-Marquardt on ``sum rho(s * (model - observed))`` with IRLS weights."""
    y = hist.density
    m, J = model_and_jacobian(theta, hist.nodes, hist.weights)
    r = s * (m - y)
    J = s[:, None] * J
    cost = cauchy_cost(r, c)
    lam = 1e-3
    it = 0
    while it < budget:
        it += 1
        w = 1.0 / (1.0 + (r / c) ** 2)
        g = J.T @ (w * r)
        if np.max(np.abs(g)) <= cfg.gtol:
            return theta, cost, it, "gtol"
        H = J.T @ (w[:, None] * J)
        dH = np.maximum(np.diag(H), 1e-300)
        while lam < 1e16:
            step = np.linalg.solve(H + lam * np.diag(dH), -g)
            trial = theta + step
            if np.all(np.isfinite(trial)) and abs(trial[3]) < 700 and abs(trial[5]) < 700:
                m_t, J_t = model_and_jacobian(trial, hist.nodes, hist.weights)
                r_t = s * (m_t - y)
                cost_t = cauchy_cost(r_t, c)
                if cost_t < cost:
                    break
            lam *= 10.0
        else:
            return theta, cost, it, "no_descent"
        small_step = np.linalg.norm(step) <= cfg.xtol * (np.linalg.norm(theta) + cfg.xtol)
        small_drop = (cost - cost_t) <= cfg.ftol * cost
        theta, r, J, cost = trial, r_t, s[:, None] * J_t, cost_t
        lam = max(lam / 10.0, 1e-12)
        if small_step:
            return theta, cost, it, "xtol"
        if small_drop:
            return theta, cost, it, "ftol"
    return theta, cost, it, "max_iterations"


def robust_fit(points, cfg: FitConfig | None = None) -> FitResult:
    """Fit a 2D Gaussian to ``points`` through their normalized histogram.

    Starts from :func:`moments_estimate`. Each pass fixes the Cauchy scale at
    ``cauchy_scale_factor`` times the median absolute (scaled) residual over
    occupied bins and runs Levenberg-Marquardt; ``cauchy_refreshes`` extra
    passes recompute the scale at the previous solution. The iteration budget
    ``max_iterations`` is shared by all passes. Raises
    :class:`InsufficientData` below ``cfg.min_samples`` points.
    """
    cfg = cfg or FitConfig()
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < cfg.min_samples:
        raise InsufficientData(f"{len(pts)} points < min_samples={cfg.min_samples}")
    init = moments_estimate(pts)
    hist = build_histogram(pts, cfg)

    theta = params_from_gaussian(init, amplitude=1.0)
    m, _ = model_and_jacobian(theta, hist.nodes, hist.weights)
    # amplitude by linear least squares against the histogram
    mm = float(m @ m)
    if mm > 0:
        theta[0] = max(float(m @ hist.density) / mm, 1e-3)

    total_it = 0
    status = "max_iterations"
    cost = float("nan")
    c = float("nan")
    for _ in range(cfg.cauchy_refreshes + 1):
        m, _ = model_and_jacobian(theta, hist.nodes, hist.weights)
        s = _residual_scale(m, hist, cfg.residual_scaling)
        c = _cauchy_scale(s * (m - hist.density), hist.counts, cfg.cauchy_scale_factor)
        budget = cfg.max_iterations - total_it
        if budget <= 0:
            status = "max_iterations"
            break
        theta, cost, it, status = _lm(theta, hist, s, c, cfg, budget)
        total_it += it
    converged = status in ("gtol", "ftol", "xtol")

    g = gaussian_from_params(theta)
    d = pts - g.mu
    mahal2 = np.einsum("ni,ij,nj->n", d, np.linalg.inv(g.sigma), d)
    return FitResult(
        gaussian=g,
        converged=converged,
        iterations=total_it,
        final_cost=cost,
        inlier_fraction=float(np.mean(mahal2 <= _INLIER_MAHAL2)),
        amplitude=float(theta[0]),
        cauchy_scale=c,
        termination=status,
    )
