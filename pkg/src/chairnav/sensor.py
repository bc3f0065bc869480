"""Depth image handling: decimation, pinhole back-projection, voxel downsampling.

Depth values are forward distance (the x coordinate in the sensor frame),
stored row-major; 0 or NaN marks an invalid pixel.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .config import CameraIntrinsics
from .geometry import PointCloud


class NonSquareFactor(ValueError):
    pass


class IndivisibleDimensions(ValueError):
    pass


@dataclass
class DepthImage:
    depth: np.ndarray                 # (height, width) float32
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float32)
        if self.depth.shape != (self.intrinsics.height, self.intrinsics.width):
            raise ValueError("depth array shape does not match intrinsics")

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height


def decimate(img: DepthImage, factor: int) -> DepthImage:
    """Keep every s-th pixel per axis, s = sqrt(factor); total count drops by factor."""
    if factor < 1:
        raise NonSquareFactor(f"factor must be a positive perfect square, got {factor}")
    s = math.isqrt(factor)
    if s * s != factor:
        raise NonSquareFactor(f"factor must be a perfect square, got {factor}")
    if factor == 1:
        return DepthImage(img.depth.copy(), img.intrinsics)
    if img.width % s or img.height % s:
        raise IndivisibleDimensions(
            f"step {s} does not divide {img.width} x {img.height}")
    k = img.intrinsics
    out = CameraIntrinsics(k.fx / s, k.fy / s, k.cx / s, k.cy / s,
                           k.width // s, k.height // s, k.min_range, k.max_range)
    return DepthImage(img.depth[::s, ::s].copy(), out)


def project_to_cloud(img: DepthImage) -> PointCloud:
    """Back-project valid, in-range pixels through the pinhole model.

    Sensor frame: x forward (the stored depth), y left, z up. Pixels are
    visited row-major, so output order is deterministic.
    """
    k = img.intrinsics
    d = img.depth
    valid = np.isfinite(d) & (d >= k.min_range) & (d <= k.max_range)
    v_idx, u_idx = np.nonzero(valid)
    dv = d[v_idx, u_idx].astype(float)
    pts = np.empty((dv.size, 3))
    pts[:, 0] = dv
    pts[:, 1] = dv * (k.cx - u_idx) / k.fx
    pts[:, 2] = dv * (k.cy - v_idx) / k.fy
    return PointCloud(pts, "sensor")


def reproject_point(p, k: CameraIntrinsics):
    """Inverse of project_to_cloud for a single point: (u, v, depth)."""
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    return k.cx - k.fx * y / x, k.cy - k.fy * z / x, x


def voxel_keys(xyz: np.ndarray, leaf: float) -> np.ndarray:
    """Pack voxel indices (anchored at the origin) into collision-free int64 keys."""
    ijk = np.floor(xyz / leaf).astype(np.int64)
    off = np.int64(1) << 20
    if np.any(np.abs(ijk) >= off):
        raise ValueError("cloud extent exceeds voxel key range")
    return ((ijk[:, 0] + off) << 42) | ((ijk[:, 1] + off) << 21) | (ijk[:, 2] + off)


def voxel_filter(cloud: PointCloud, leaf: float) -> PointCloud:
    """Replace all points of each occupied leaf-sized cube by their centroid."""
    if leaf <= 0:
        raise ValueError("leaf must be positive")
    if len(cloud) == 0:
        return PointCloud.empty(cloud.frame)
    keys = voxel_keys(cloud.xyz, leaf)
    uniq, inv = np.unique(keys, return_inverse=True)
    counts = np.bincount(inv).astype(float)
    out = np.empty((uniq.size, 3))
    for a in range(3):
        out[:, a] = np.bincount(inv, weights=cloud.xyz[:, a]) / counts
    return PointCloud(out, cloud.frame)


def write_depth(path, img: DepthImage) -> None:
    """Regression fixture format: u32 width, u32 height, then f32 row-major (LE)."""
    with open(path, "wb") as f:
        f.write(struct.pack("<II", img.width, img.height))
        f.write(img.depth.astype("<f4").tobytes())


def read_depth(path, intrinsics: CameraIntrinsics | None = None) -> DepthImage:
    with open(path, "rb") as f:
        w, h = struct.unpack("<II", f.read(8))
        depth = np.frombuffer(f.read(4 * w * h), dtype="<f4").reshape(h, w)
    if intrinsics is None:
        from .config import CameraIntrinsics as CI
        intrinsics = CI.from_fov(w, h, 70.0, 60.0)
    if (intrinsics.width, intrinsics.height) != (w, h):
        raise ValueError("file dimensions do not match intrinsics")
    return DepthImage(depth.copy(), intrinsics)
