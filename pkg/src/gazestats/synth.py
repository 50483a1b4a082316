"""Synthetic gaze datasets with analytically known error fields.

Every sample's estimation error is drawn in the canonical tangent plane of its
ground-truth direction from ``N(bias(d), k^2 * Sigma(d))`` where ``k`` is the
product of a per-subject scale and a depth multiplier. The 2D error is lifted
back to the sphere orthographically, so projecting the estimate into the same
tangent frame returns the drawn error exactly. :func:`expected_cell` gives the
population Gaussian that a directional analysis should recover.

Field specifications are small JSON-friendly dicts, e.g.::

    {"kind": "center_ramp", "base_deg": 0.3, "peak_deg": 2.5,
     "ramp_start_deg": -20, "ramp_end_deg": -40, "taper_deg": 5}
    {"kind": "anisotropic", "sigma_h_deg": 4.0, "sigma_v_deg": 3.0}
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dataio import Dataset
from .errors import ConfigError
from .gaussian2d import Gaussian2D
from .geometry import angles_from_direction, direction_from_angles, tangent_bases
from .metrics import SubjectMeta

BIAS_KINDS = ("zero", "constant", "center_ramp")
COV_KINDS = ("isotropic", "anisotropic", "quadrant")
SCALE_KINDS = ("none", "lognormal", "discrete")
_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_subjects: int = 50
    samples_per_subject: int = 2000
    depth_range_cm: tuple[float, float] = (30.0, 350.0)
    depth_distribution: str = "loguniform"  # short distances over-represented
    field_half_extent_deg: float = 45.0
    # std of the truncated-normal target density per axis; None = uniform
    center_bias_sigma_deg: float | None = 40.0
    bias: dict = field(default_factory=lambda: {"kind": "zero"})
    covariance: dict = field(default_factory=lambda: {"kind": "anisotropic", "sigma_h_deg": 4.0, "sigma_v_deg": 3.0})
    outlier_rate: float = 0.0
    outlier_cone_deg: float = 20.0
    subject_scale: dict = field(default_factory=lambda: {"kind": "none"})
    # (depth_cm, multiplier) knots, linear in between, constant outside
    depth_coupling: tuple[tuple[float, float], ...] = ()
    n_devices: int = 8

    def __post_init__(self) -> None:
        object.__setattr__(self, "depth_range_cm", tuple(float(x) for x in self.depth_range_cm))
        object.__setattr__(self, "depth_coupling", tuple(tuple(float(x) for x in k) for k in self.depth_coupling))
        validate(self)

    @property
    def n_samples(self) -> int:
        return self.n_subjects * self.samples_per_subject

    def to_dict(self) -> dict:
        d = asdict(self)
        d["depth_range_cm"] = list(self.depth_range_cm)
        d["depth_coupling"] = [list(k) for k in self.depth_coupling]
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown SynthConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        return cls.from_dict(data)


def validate(cfg: SynthConfig) -> None:
    if cfg.n_subjects < 1 or cfg.samples_per_subject < 1:
        raise ConfigError("n_subjects and samples_per_subject must be >= 1")
    lo, hi = cfg.depth_range_cm
    if not 0 < lo < hi:
        raise ConfigError("depth range must satisfy 0 < lo < hi")
    if cfg.depth_distribution not in ("uniform", "loguniform"):
        raise ConfigError("depth_distribution must be 'uniform' or 'loguniform'")
    if not 0 < cfg.field_half_extent_deg < 80:
        raise ConfigError("field_half_extent_deg must be in (0, 80)")
    if cfg.center_bias_sigma_deg is not None and not cfg.center_bias_sigma_deg > 0:
        raise ConfigError("center_bias_sigma_deg must be positive or null")
    if not 0.0 <= cfg.outlier_rate <= 1.0:
        raise ConfigError("outlier_rate must be in [0, 1]")
    if not 0 < cfg.outlier_cone_deg < 90:
        raise ConfigError("outlier_cone_deg must be in (0, 90)")
    if cfg.bias.get("kind") not in BIAS_KINDS:
        raise ConfigError(f"bias.kind must be one of {BIAS_KINDS}")
    if cfg.covariance.get("kind") not in COV_KINDS:
        raise ConfigError(f"covariance.kind must be one of {COV_KINDS}")
    kind = cfg.subject_scale.get("kind")
    if kind not in SCALE_KINDS:
        raise ConfigError(f"subject_scale.kind must be one of {SCALE_KINDS}")
    if kind == "discrete":
        values = cfg.subject_scale.get("values", [])
        probs = cfg.subject_scale.get("probs", [1.0 / max(len(values), 1)] * len(values))
        if not values or len(values) != len(probs) or any(v <= 0 for v in values):
            raise ConfigError("discrete subject_scale needs positive values with matching probs")
        if any(not 0 <= p <= 1 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError("subject_scale probs must be fractions summing to 1")
    if kind == "lognormal" and not cfg.subject_scale.get("sigma_log", 0.3) >= 0:
        raise ConfigError("sigma_log must be >= 0")
    for depth, mult in cfg.depth_coupling:
        if not mult > 0:
            raise ConfigError("depth-coupling multipliers must be positive")
    if list(cfg.depth_coupling) != sorted(cfg.depth_coupling):
        raise ConfigError("depth-coupling knots must be sorted by depth")
    # covariance field must be PD on the whole lattice
    ext = cfg.field_half_extent_deg
    hh, vv = np.meshgrid(np.linspace(-ext, ext, 19), np.linspace(-ext, ext, 19))
    d = direction_from_angles(hh.ravel(), vv.ravel())
    try:
        cov = covariance_field(cfg, d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad covariance spec: {exc}") from None
    if not np.all(np.linalg.eigvalsh(cov)[:, 0] > 0):
        raise ConfigError("covariance field is not positive definite everywhere on the grid")
    try:
        bias_field(cfg, d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad bias spec: {exc}") from None


# -- analytic fields -------------------------------------------------------


def _sin_deg(x):
    return np.sin(np.radians(x))


def bias_field(cfg: SynthConfig, d: np.ndarray) -> np.ndarray:
    """Tangent-plane bias vectors (sin-angle units) in the canonical frames of ``d``."""
    d = np.atleast_2d(d)
    spec = cfg.bias
    kind = spec["kind"]
    if kind == "zero":
        return np.zeros((len(d), 2))
    if kind == "constant":
        # bias given by its angle and direction (in the canonical frame)
        vec = np.asarray(spec["vector_deg"], dtype=float)
        mag = float(np.hypot(*vec))
        if mag == 0:
            return np.zeros((len(d), 2))
        return np.tile(vec / mag * math.sin(math.radians(mag)), (len(d), 1))
    # center_ramp: points toward the optical axis, magnitude ramps up in the lower field
    b1, b2 = tangent_bases(d)
    toward = np.column_stack([b1 @ _Z, b2 @ _Z])
    norm = np.linalg.norm(toward, axis=1)
    unit = np.divide(toward, norm[:, None], out=np.zeros_like(toward), where=norm[:, None] > 1e-12)
    _, vert = angles_from_direction(d)
    start, end = float(spec.get("ramp_start_deg", -20.0)), float(spec.get("ramp_end_deg", -40.0))
    t = np.clip((vert - start) / (end - start), 0.0, 1.0)
    base, peak = float(spec.get("base_deg", 0.3)), float(spec.get("peak_deg", 2.5))
    mag = base + (peak - base) * t
    ecc = np.degrees(np.arccos(np.clip(d[:, 2], -1.0, 1.0)))
    taper = float(spec.get("taper_deg", 5.0))
    if taper > 0:
        mag = mag * np.minimum(1.0, ecc / taper)
    return unit * _sin_deg(mag)[:, None]


def covariance_field(cfg: SynthConfig, d: np.ndarray) -> np.ndarray:
    """Per-direction 2x2 covariance (canonical frame: b1 ~ horizontal, b2 ~ vertical)."""
    d = np.atleast_2d(d)
    spec = cfg.covariance
    kind = spec["kind"]
    out = np.zeros((len(d), 2, 2))
    if kind == "isotropic":
        s = float(_sin_deg(float(spec["sigma_deg"])))
        out[:, 0, 0] = out[:, 1, 1] = s * s
        return out
    sh = float(_sin_deg(float(spec["sigma_h_deg"])))
    sv = float(_sin_deg(float(spec["sigma_v_deg"])))
    out[:, 0, 0] = sh * sh
    out[:, 1, 1] = sv * sv
    if kind == "quadrant":
        # bilinear blend of corner factors over the field (upper/lower x left/right)
        f = spec.get("factors", {})
        ul, ur = float(f.get("upper_left", 1.0)), float(f.get("upper_right", 1.0))
        ll, lr = float(f.get("lower_left", 1.0)), float(f.get("lower_right", 1.0))
        h, v = angles_from_direction(d)
        x = np.clip((h / cfg.field_half_extent_deg + 1) / 2, 0, 1)
        y = np.clip((v / cfg.field_half_extent_deg + 1) / 2, 0, 1)
        fac = (1 - y) * ((1 - x) * ll + x * lr) + y * ((1 - x) * ul + x * ur)
        out *= (fac**2)[:, None, None]
    return out


def depth_multiplier(cfg: SynthConfig, depth_cm) -> np.ndarray:
    depth_cm = np.asarray(depth_cm, dtype=float)
    if not cfg.depth_coupling:
        return np.ones_like(depth_cm)
    knots = np.array(cfg.depth_coupling)
    return np.interp(depth_cm, knots[:, 0], knots[:, 1])


def subject_scale_second_moment(cfg: SynthConfig) -> float:
    spec = cfg.subject_scale
    kind = spec["kind"]
    if kind == "none":
        return 1.0
    if kind == "discrete":
        values = np.asarray(spec["values"], dtype=float)
        probs = np.asarray(spec.get("probs", [1.0 / len(values)] * len(values)), dtype=float)
        return float(probs @ values**2)
    s = float(spec.get("sigma_log", 0.3))
    return 1.0 if spec.get("normalize", True) else math.exp(2 * s * s)


def depth_second_moment(cfg: SynthConfig) -> float:
    """E[m(depth)^2] under the configured depth distribution (fine quadrature)."""
    if not cfg.depth_coupling:
        return 1.0
    lo, hi = cfg.depth_range_cm
    if cfg.depth_distribution == "uniform":
        x = np.linspace(lo, hi, 200001)
    else:
        x = np.exp(np.linspace(math.log(lo), math.log(hi), 200001))
    return float(np.mean(depth_multiplier(cfg, x) ** 2))


def expected_cell(cfg: SynthConfig, d_gt) -> Gaussian2D:
    """Analytic tangent-plane Gaussian at ``d_gt`` (outliers excluded)."""
    d = np.asarray(d_gt, dtype=float).reshape(1, 3)
    scale2 = subject_scale_second_moment(cfg) * depth_second_moment(cfg)
    return Gaussian2D(bias_field(cfg, d)[0], scale2 * covariance_field(cfg, d)[0])


# -- generation ------------------------------------------------------------


def _target_angles(rng: np.random.Generator, n: int, cfg: SynthConfig) -> np.ndarray:
    ext = cfg.field_half_extent_deg
    if cfg.center_bias_sigma_deg is None:
        return rng.uniform(-ext, ext, size=(n, 2))
    out = rng.normal(0.0, cfg.center_bias_sigma_deg, size=(n, 2))
    bad = np.abs(out) > ext
    while bad.any():
        out[bad] = rng.normal(0.0, cfg.center_bias_sigma_deg, size=int(bad.sum()))
        bad = np.abs(out) > ext
    return out


def _subject_scale(rng: np.random.Generator, cfg: SynthConfig) -> float:
    spec = cfg.subject_scale
    kind = spec["kind"]
    u = rng.random()
    z = rng.standard_normal()
    if kind == "none":
        return 1.0
    if kind == "discrete":
        values = spec["values"]
        probs = spec.get("probs", [1.0 / len(values)] * len(values))
        return float(values[min(int(np.searchsorted(np.cumsum(probs), u, side="right")), len(values) - 1)])
    s = float(spec.get("sigma_log", 0.3))
    shift = s * s if spec.get("normalize", True) else 0.0
    return math.exp(s * z - shift)


def _subject_meta(rng: np.random.Generator, sid: str) -> SubjectMeta:
    age = int(rng.integers(18, 65))
    gender = "female" if rng.random() < 0.5 else "male"
    ipd = float(np.round(np.clip(rng.normal(63.2, 3.6), 50.0, 76.0), 1))
    contacts = bool(rng.random() < 0.2)
    makeup = bool(rng.random() < 0.3)
    return SubjectMeta(sid, float(age), gender, ipd, contacts, makeup)


def _generate_subject(cfg: SynthConfig, index: int) -> dict:
    rng = np.random.default_rng([cfg.seed, index])
    sid = f"S{index:04d}"
    meta = _subject_meta(rng, sid)
    scale = _subject_scale(rng, cfg)
    n = cfg.samples_per_subject

    ang = _target_angles(rng, n, cfg)
    lo, hi = cfg.depth_range_cm
    u = rng.random(n)
    depth = lo + (hi - lo) * u if cfg.depth_distribution == "uniform" else lo * (hi / lo) ** u
    z = rng.standard_normal((n, 2))
    out_u = rng.random(n)
    out_cos = rng.random(n)
    out_phi = rng.random(n) * 2.0 * math.pi

    d_gt = direction_from_angles(ang[:, 0], ang[:, 1])
    b1, b2 = tangent_bases(d_gt)
    k = scale * depth_multiplier(cfg, depth)
    L = np.linalg.cholesky(covariance_field(cfg, d_gt))
    e = bias_field(cfg, d_gt) + k[:, None] * np.einsum("nij,nj->ni", L, z)
    r = np.linalg.norm(e, axis=1)
    too_long = r >= 0.999
    e[too_long] *= (0.999 / r[too_long])[:, None]
    normal = np.sqrt(1.0 - np.sum(e * e, axis=1))
    d_dev = e[:, :1] * b1 + e[:, 1:] * b2 + normal[:, None] * d_gt

    # outliers: uniform on the spherical cap around the true direction
    is_out = out_u < cfg.outlier_rate
    if is_out.any():
        cos_a = math.cos(math.radians(cfg.outlier_cone_deg))
        ct = 1.0 - out_cos[is_out] * (1.0 - cos_a)
        st = np.sqrt(1.0 - ct * ct)
        ph = out_phi[is_out]
        d_dev[is_out] = (
            ct[:, None] * d_gt[is_out]
            + (st * np.cos(ph))[:, None] * b1[is_out]
            + (st * np.sin(ph))[:, None] * b2[is_out]
        )
    d_dev /= np.linalg.norm(d_dev, axis=1, keepdims=True)

    env = np.where(np.arange(n) < n // 2, "indoor", "outdoor").astype(object)
    return {
        "meta": meta,
        "sid": np.full(n, sid, dtype=object),
        "session": np.array([f"{sid}-{x}" for x in env], dtype=object),
        "device": np.full(n, f"D{index % cfg.n_devices:02d}", dtype=object),
        "env": env,
        "p_gt": depth[:, None] * d_gt,
        "d_dev": d_dev,
    }


def generate(cfg: SynthConfig, threads: int = 1) -> Dataset:
    """Draw a dataset from ``cfg``; subjects use independent ``(seed, index)`` streams."""
    validate(cfg)
    idx = range(cfg.n_subjects)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda i: _generate_subject(cfg, i), idx))
    else:
        parts = [_generate_subject(cfg, i) for i in idx]
    return Dataset(
        subject_id=np.concatenate([p["sid"] for p in parts]),
        session_id=np.concatenate([p["session"] for p in parts]),
        device_id=np.concatenate([p["device"] for p in parts]),
        environment=np.concatenate([p["env"] for p in parts]),
        p_gt=np.concatenate([p["p_gt"] for p in parts]),
        d_dev=np.concatenate([p["d_dev"] for p in parts]),
        meta={p["meta"].subject_id: p["meta"] for p in parts},
    )
