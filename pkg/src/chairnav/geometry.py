"""Planar poses, vertical planes, and point-cloud containers.

Conventions used everywhere: x forward, y left, z up, right-handed.
Chair motion is planar, so poses are SE(2); clouds stay 3D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(a):
    """Normalize an angle (scalar or array) to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    out = -((-a + math.pi) % (2.0 * math.pi) - math.pi)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw])

    @staticmethod
    def from_array(v) -> "Pose2D":
        return Pose2D(float(v[0]), float(v[1]), float(v[2]))


def compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of frame b expressed in a's parent frame (a then b)."""
    c, s = math.cos(a.yaw), math.sin(a.yaw)
    return Pose2D(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.yaw + b.yaw,
    )


def invert(p: Pose2D) -> Pose2D:
    c, s = math.cos(p.yaw), math.sin(p.yaw)
    return Pose2D(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.yaw)


def relative(a: Pose2D, b: Pose2D) -> Pose2D:
    """Pose of b in the frame of a: invert(a) composed with b."""
    return compose(invert(a), b)


@dataclass
class PointCloud:
    """N x 3 float array of points plus a frame tag (sensor | base | world | map)."""

    xyz: np.ndarray
    frame: str = "sensor"

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @property
    def x(self):
        return self.xyz[:, 0]

    @property
    def y(self):
        return self.xyz[:, 1]

    @property
    def z(self):
        return self.xyz[:, 2]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.xyz).all())

    @staticmethod
    def empty(frame: str = "sensor") -> "PointCloud":
        return PointCloud(np.empty((0, 3)), frame)


def transform_cloud(cloud: PointCloud, pose: Pose2D, frame: str = "world") -> PointCloud:
    """Rotate about z by pose.yaw and translate by (x, y); z passes through."""
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    p = cloud.xyz
    out = np.empty_like(p)
    out[:, 0] = c * p[:, 0] - s * p[:, 1] + pose.x
    out[:, 1] = s * p[:, 0] + c * p[:, 1] + pose.y
    out[:, 2] = p[:, 2]
    return PointCloud(out, frame)


def transform_xy(points: np.ndarray, pose: Pose2D) -> np.ndarray:
    """Transform an N x 2 array of planar points by an SE(2) pose."""
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    out = np.empty_like(p)
    out[:, 0] = c * p[:, 0] - s * p[:, 1] + pose.x
    out[:, 1] = s * p[:, 0] + c * p[:, 1] + pose.y
    return out


@dataclass(frozen=True)
class Plane:
    """Plane n . p + d = 0 with unit normal."""

    normal: np.ndarray
    d: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / norm)
        object.__setattr__(self, "d", float(self.d) / norm)

    @staticmethod
    def from_point_normal(point, normal) -> "Plane":
        n = np.asarray(normal, dtype=float)
        return Plane(n, -float(np.dot(n, point)))


def point_plane_distance(p, plane: Plane):
    """|n . p + d| for one point (3,) or many (N, 3)."""
    p = np.asarray(p, dtype=float)
    d = np.abs(p @ plane.normal + plane.d)
    return float(d) if d.ndim == 0 else d
