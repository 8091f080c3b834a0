"""Rotation algebra, camera models and weak-perspective depth/scale math.

Rotations are plain ``(3, 3)`` float arrays.  Angles are radians everywhere;
conversion to degrees happens only in reports and the CLI.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .errors import DegenerateConfigurationError

TWO_PI = 2.0 * math.pi

# Below this |sin(e - pi/2)| azimuth and in-plane angle are not separable.
GIMBAL_TOL = 1e-10


class GimbalDegeneracyWarning(UserWarning):
    """Elevation is +-pi/2; azimuth was pinned to zero."""


@dataclass(frozen=True)
class Viewpoint:
    azimuth: float
    elevation: float
    in_plane: float

    def normalized(self) -> "Viewpoint":
        """Wrap into a in [0, 2pi), theta in [-pi, pi); fold e into [-pi/2, pi/2]."""
        a, e, t = self.azimuth, self.elevation, self.in_plane
        # R depends on e only through e - pi/2; fold via the rotation itself
        # when e is outside its canonical range.
        e_wrapped = (e + math.pi) % TWO_PI - math.pi
        if abs(e_wrapped) > math.pi / 2:
            return viewpoint_from_rotation(rotation_from_viewpoint(self))
        a = a % TWO_PI
        if a >= TWO_PI:
            a = 0.0
        t = (t + math.pi) % TWO_PI - math.pi
        return Viewpoint(a, e_wrapped, t)

    def as_degrees(self) -> tuple[float, float, float]:
        return tuple(math.degrees(x) for x in (self.azimuth, self.elevation, self.in_plane))


@dataclass(frozen=True)
class CameraModel:
    """Image-center camera; ``intrinsics`` only for the full-perspective kind."""

    kind: str = "weak_perspective"
    cx: float = 0.0
    cy: float = 0.0
    intrinsics: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("weak_perspective", "full_perspective"):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.kind == "weak_perspective" and self.intrinsics is not None:
            raise ValueError("weak_perspective camera takes no intrinsics")
        if self.kind == "full_perspective":
            if self.intrinsics is None:
                raise ValueError("full_perspective camera needs a 3x3 intrinsics matrix")
            k = np.asarray(self.intrinsics, dtype=np.float64)
            if k.shape != (3, 3):
                raise ValueError("intrinsics must be 3x3")
            if abs(np.linalg.det(k)) < 1e-12:
                raise DegenerateConfigurationError("intrinsics matrix is singular", rank=int(np.linalg.matrix_rank(k)))
            object.__setattr__(self, "intrinsics", k)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    @classmethod
    def weak(cls, cx: float, cy: float) -> "CameraModel":
        return cls("weak_perspective", float(cx), float(cy))

    @classmethod
    def full(cls, intrinsics) -> "CameraModel":
        k = np.asarray(intrinsics, dtype=np.float64)
        return cls("full_perspective", float(k[0, 2]), float(k[1, 2]), k)


@dataclass(frozen=True)
class SimilarityTransform:
    """x -> s * R @ x + t"""

    s: float
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"scale must be positive, got {self.s}")

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.s * pts @ self.R.T + self.t

    def inverse(self) -> "SimilarityTransform":
        rt = self.R.T
        return SimilarityTransform(1.0 / self.s, rt, -(rt @ self.t) / self.s)


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_viewpoint(v: Viewpoint) -> np.ndarray:
    """R = Rz(theta) Rx(e - pi/2) Rz(-a)."""
    return rot_z(v.in_plane) @ rot_x(v.elevation - math.pi / 2) @ rot_z(-v.azimuth)


def viewpoint_from_rotation(R) -> Viewpoint:
    """Inverse of :func:`rotation_from_viewpoint`, normalized.

    At e = +-pi/2 only a - theta (or a + theta) is observable; the azimuth is
    then fixed to 0 and a :class:`GimbalDegeneracyWarning` is issued.
    """
    R = np.asarray(R, dtype=np.float64)
    # third row is (-sb*sa, sb*ca, cb) with b = e - pi/2 in [-pi, 0]
    sin_b = -math.hypot(R[2, 0], R[2, 1])
    cos_b = R[2, 2]
    elevation = math.atan2(sin_b, cos_b) + math.pi / 2
    if -sin_b < GIMBAL_TOL:
        warnings.warn(
            "elevation at +-pi/2: azimuth and in-plane rotation are coupled; azimuth set to 0",
            GimbalDegeneracyWarning,
            stacklevel=2,
        )
        elevation = math.pi / 2 if cos_b > 0 else -math.pi / 2
        azimuth = 0.0
        in_plane = math.atan2(R[1, 0], R[0, 0])
    else:
        azimuth = math.atan2(R[2, 0], -R[2, 1])
        in_plane = math.atan2(-R[0, 2], R[1, 2])
    azimuth %= TWO_PI
    if azimuth >= TWO_PI:
        azimuth = 0.0
    in_plane = (in_plane + math.pi) % TWO_PI - math.pi
    return Viewpoint(azimuth, elevation, in_plane)


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=np.float64)
    return (
        R.shape == (3, 3)
        and np.abs(R.T @ R - np.eye(3)).max() <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def geodesic_distance(R1, R2) -> float:
    """Rotation angle of R1^T R2, i.e. ||logm(R1^T R2)||_F / sqrt(2), in [0, pi]."""
    ra = np.ascontiguousarray(R1, dtype=np.float64)[None]
    rb = np.ascontiguousarray(R2, dtype=np.float64)[None]
    return float(kernels.geodesic_angles(ra, rb)[0])


def geodesic_distances(R1s, R2s) -> np.ndarray:
    ra = np.ascontiguousarray(R1s, dtype=np.float64)
    rb = np.ascontiguousarray(R2s, dtype=np.float64)
    if ra.shape != rb.shape or ra.shape[1:] != (3, 3):
        raise ValueError("expected two (N, 3, 3) stacks of equal length")
    return kernels.geodesic_angles(ra, rb)


def _check_weak(cam: CameraModel):
    if cam.kind != "weak_perspective":
        raise ValueError("operation requires a weak_perspective camera")


def project_weak_perspective(p_metric, s: float, cam: CameraModel) -> np.ndarray:
    """Metric (x, y, z) -> (u, v, d) = (x/s + cx, y/s + cy, z/s).

    Works on a single point or an ``(N, 3)`` array.
    """
    _check_weak(cam)
    if not s > 0:
        raise ValueError(f"scale must be positive, got {s}")
    p = np.asarray(p_metric, dtype=np.float64)
    return p / s + np.array([cam.cx, cam.cy, 0.0])


def unproject_weak_perspective(uvd, s: float, cam: CameraModel) -> np.ndarray:
    _check_weak(cam)
    if not s > 0:
        raise ValueError(f"scale must be positive, got {s}")
    q = np.asarray(uvd, dtype=np.float64)
    return (q - np.array([cam.cx, cam.cy, 0.0])) * s


def image_frame_points(uvd, cam: CameraModel) -> np.ndarray:
    """(u - cx, v - cy, d): the un-normalized point used when the scale is unknown."""
    q = np.asarray(uvd, dtype=np.float64)
    return q - np.array([cam.cx, cam.cy, 0.0])


def project_full_perspective(p_metric, cam: CameraModel) -> np.ndarray:
    """K p, dehomogenized to (u, v)."""
    if cam.kind != "full_perspective":
        raise ValueError("operation requires a full_perspective camera")
    h = np.asarray(p_metric, dtype=np.float64) @ cam.intrinsics.T
    return h[..., :2] / h[..., 2:3]


def backproject_full_perspective(uvd, cam: CameraModel) -> np.ndarray:
    """K^-1 (u d, v d, d): the metric point at depth d seen at pixel (u, v)."""
    if cam.kind != "full_perspective":
        raise ValueError("operation requires a full_perspective camera")
    q = np.asarray(uvd, dtype=np.float64)
    d = q[..., 2:3]
    h = np.concatenate([q[..., :2] * d, d], axis=-1)
    return np.linalg.solve(cam.intrinsics, h.T).T if h.ndim > 1 else np.linalg.solve(cam.intrinsics, h)


def recover_scale(points_metric, points_image) -> float:
    """Metric units per pixel from bounding-box extents of the two point sets."""
    pm = np.asarray(points_metric, dtype=np.float64)
    pi = np.asarray(points_image, dtype=np.float64)
    if len(pm) < 2 or len(pi) < 2:
        raise ValueError("need at least two points to recover a scale")
    metric_extent = np.ptp(pm[:, :2], axis=0).max()
    image_extent = np.ptp(pi[:, :2], axis=0).max()
    if image_extent <= 0:
        raise DegenerateConfigurationError("image points coincide; scale is undefined", rank=0)
    return float(metric_extent / image_extent)
