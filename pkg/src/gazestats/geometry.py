"""Unit-sphere and pinhole-camera geometry.

Conventions: scene-camera coordinates with +z forward, +x right and +y down.
Directions are plain ``numpy`` arrays of shape ``(3,)`` (or ``(n, 3)`` for the
batched helpers). Angles are degrees at every public boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateInput

MIN_NORM = 1e-6
_FALLBACK_DOT = 0.99
_ANTIPARALLEL_DOT = -0.999

_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal right-handed frame ``(d_gt, b1, b2)`` spanning the tangent plane at ``d_gt``."""

    d_gt: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        """2x3 map sending a direction to its tangent-plane coordinates."""
        return np.vstack([self.b1, self.b2])

    def lift(self, v: np.ndarray) -> np.ndarray:
        """3D vector for tangent coordinates ``v`` (no normal component)."""
        v = np.asarray(v, dtype=float)
        return v[..., 0, None] * self.b1 + v[..., 1, None] * self.b2


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("sensor size must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


# 800x800 px sensor with a 90 x 90 degree field of view, no distortion.
IDEAL_CAMERA = CameraIntrinsics(fx=400.0, fy=400.0, cx=400.0, cy=400.0, width=800, height=800)


def normalize(p) -> np.ndarray:
    """Unit vector along ``p``; raises :class:`DegenerateInput` for near-zero input."""
    p = np.asarray(p, dtype=float)
    n = float(np.linalg.norm(p))
    if not n > MIN_NORM:
        raise DegenerateInput(f"cannot normalize vector of norm {n:.3g}")
    return p / n


def normalize_rows(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    n = np.linalg.norm(p, axis=-1, keepdims=True)
    if np.any(~(n > MIN_NORM)):
        raise DegenerateInput("cannot normalize vector of (near-)zero norm")
    return p / n


def angle_between(u, v) -> float:
    """Angle between two unit vectors in degrees, in ``[0, 180]``.

    Uses ``atan2(|u x v|, u.v)``, which stays accurate near 0 and 180 degrees.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return math.degrees(math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v))))


def angles_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise :func:`angle_between` for ``(n, 3)`` arrays (either side may broadcast)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    s = np.linalg.norm(np.cross(u, v), axis=-1)
    return np.degrees(np.arctan2(s, np.sum(u * v, axis=-1)))


def _skew(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    out = np.zeros(k.shape[:-1] + (3, 3))
    out[..., 0, 1] = -k[..., 2]
    out[..., 0, 2] = k[..., 1]
    out[..., 1, 0] = k[..., 2]
    out[..., 1, 2] = -k[..., 0]
    out[..., 2, 0] = -k[..., 1]
    out[..., 2, 1] = k[..., 0]
    return out


def rotation_onto(a, b) -> np.ndarray:
    """Rotation about ``a x b`` taking unit vector ``a`` onto unit vector ``b``.

    Uses ``R = I + [k]x + [k]x^2 / (1 + a.b)`` with ``k = a x b``, which is exact
    for any non-antiparallel pair and reduces to the identity for ``a == b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.dot(a, b))
    if c <= _ANTIPARALLEL_DOT:
        raise DegenerateInput("rotation_onto is undefined for (nearly) antiparallel vectors")
    K = _skew(np.cross(a, b))
    return np.eye(3) + K + (K @ K) / (1.0 + c)


def rotations_onto(a: np.ndarray, b) -> np.ndarray:
    """Batched :func:`rotation_onto`; returns ``(n, 3, 3)``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.broadcast_to(np.asarray(b, dtype=float), a.shape)
    c = np.sum(a * b, axis=-1)
    if np.any(c <= _ANTIPARALLEL_DOT):
        raise DegenerateInput("rotation_onto is undefined for (nearly) antiparallel vectors")
    K = _skew(np.cross(a, b))
    return np.eye(3) + K + (K @ K) / (1.0 + c)[:, None, None]


def make_tangent_frame(d_gt) -> TangentFrame:
    """Canonical Gram-Schmidt frame at ``d_gt``.

    ``b1`` is the x axis made orthogonal to ``d_gt`` (the y axis when ``d_gt`` is
    within ~8 degrees of x), and ``b2 = d_gt x b1``.
    """
    d = np.asarray(d_gt, dtype=float)
    seed = _Y if abs(float(d @ _X)) > _FALLBACK_DOT else _X
    b1 = seed - (seed @ d) * d
    b1 = b1 / np.linalg.norm(b1)
    b2 = np.cross(d, b1)
    return TangentFrame(d_gt=d, b1=b1, b2=b2)


def tangent_bases(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched canonical ``(b1, b2)`` for ``(n, 3)`` directions; matches :func:`make_tangent_frame`."""
    d = np.atleast_2d(np.asarray(d, dtype=float))
    use_y = np.abs(d[:, 0]) > _FALLBACK_DOT
    seed = np.where(use_y[:, None], _Y, _X)
    b1 = seed - np.sum(seed * d, axis=1, keepdims=True) * d
    b1 /= np.linalg.norm(b1, axis=1, keepdims=True)
    b2 = np.cross(d, b1)
    return b1, b2


def project_to_tangent(frame: TangentFrame, d: np.ndarray) -> np.ndarray:
    """Orthogonal projection of direction(s) into the tangent plane: ``(b1.d, b2.d)``."""
    return np.asarray(d, dtype=float) @ frame.matrix.T


def tangent_length_to_angle(length: float) -> float:
    """Visual angle in degrees for a tangent-plane length (``asin``).

    Lengths above 1 are clamped to 1 with a ``RuntimeWarning``.
    """
    if length < 0:
        raise ValueError("tangent length must be non-negative")
    if length > 1.0:
        warnings.warn(f"tangent length {length:.6g} > 1 clamped to 1", RuntimeWarning, stacklevel=2)
        length = 1.0
    return math.degrees(math.asin(length))


def angle_to_tangent_length(angle_deg: float) -> float:
    return math.sin(math.radians(angle_deg))


def normalized_image_coords(d) -> np.ndarray:
    """``(x/z, y/z)`` of direction(s) under an ideal pinhole camera."""
    d = np.asarray(d, dtype=float)
    z = d[..., 2]
    if np.any(~(z > MIN_NORM)):
        raise BehindCamera("direction is not in front of the camera")
    return d[..., :2] / z[..., None]


def project_point(intr: CameraIntrinsics, d) -> np.ndarray:
    """Pixel coordinates ``(u, v)`` of direction(s) ``d``."""
    xy = normalized_image_coords(d)
    return np.stack([intr.fx * xy[..., 0] + intr.cx, intr.fy * xy[..., 1] + intr.cy], axis=-1)


def unproject_point(intr: CameraIntrinsics, uv) -> np.ndarray:
    """Unit direction(s) through pixel(s) ``uv``."""
    uv = np.asarray(uv, dtype=float)
    ray = np.stack(
        [(uv[..., 0] - intr.cx) / intr.fx, (uv[..., 1] - intr.cy) / intr.fy, np.ones(uv.shape[:-1])],
        axis=-1,
    )
    return ray / np.linalg.norm(ray, axis=-1, keepdims=True)


def direction_from_angles(horizontal_deg, vertical_deg) -> np.ndarray:
    """Direction for image-aligned horizontal/vertical angles (vertical positive = up).

    The angles are measured in the x-z and y-z planes respectively, so
    ``+-45`` degrees on both axes spans exactly the 90 x 90 degree frame of
    :data:`IDEAL_CAMERA`.
    """
    h = np.radians(np.asarray(horizontal_deg, dtype=float))
    v = np.radians(np.asarray(vertical_deg, dtype=float))
    ray = np.stack([np.tan(h), -np.tan(v), np.ones(np.broadcast(h, v).shape)], axis=-1)
    return ray / np.linalg.norm(ray, axis=-1, keepdims=True)


def angles_from_direction(d) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`direction_from_angles` for directions with ``z > 0``."""
    d = np.asarray(d, dtype=float)
    return np.degrees(np.arctan2(d[..., 0], d[..., 2])), np.degrees(np.arctan2(-d[..., 1], d[..., 2]))
