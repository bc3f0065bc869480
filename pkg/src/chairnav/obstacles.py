"""Ground/obstacle segmentation from surface normals, 2D projection, and
synthetic planar scans.

Expects clouds in a frame where z is vertical and z = 0 is the floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import ScanConfig
from .geometry import PointCloud, Pose2D


@dataclass
class LabeledCloud:
    ground: PointCloud
    obstacles: PointCloud
    ground_mask: np.ndarray           # bool per input point


@dataclass
class PlanarScan:
    angle_min: float
    angle_max: float
    angle_increment: float
    ranges: np.ndarray                # meters, inf = no return
    origin: Pose2D
    max_range: float

    def bearings(self) -> np.ndarray:
        return self.angle_min + self.angle_increment * np.arange(self.ranges.size)

    def points(self) -> np.ndarray:
        """Finite returns as N x 2 points in the scan's own frame."""
        ok = np.isfinite(self.ranges)
        b = self.bearings()[ok]
        r = self.ranges[ok]
        return np.column_stack([r * np.cos(b), r * np.sin(b)])


def scan_bin_count(cfg: ScanConfig) -> int:
    return int(math.floor((cfg.angle_max - cfg.angle_min) / cfg.angle_increment + 1e-9)) + 1


def _smallest_eigenvectors(C: np.ndarray) -> np.ndarray:
    """Unit eigenvector of the smallest eigenvalue for a stack of symmetric
    3x3 matrices, via the trigonometric closed form. NaN rows mark
    neighborhoods too degenerate to orient."""
    scale = np.einsum("nii->n", C)                      # trace >= 0 for covariances
    bad = ~(scale > 0)
    s = np.where(bad, 1.0, scale)
    A = C / s[:, None, None]

    a00, a11, a22 = A[:, 0, 0], A[:, 1, 1], A[:, 2, 2]
    a01, a02, a12 = A[:, 0, 1], A[:, 0, 2], A[:, 1, 2]
    q = (a00 + a11 + a22) / 3.0
    b00, b11, b22 = a00 - q, a11 - q, a22 - q
    p1 = a01 ** 2 + a02 ** 2 + a12 ** 2
    p2 = b00 ** 2 + b11 ** 2 + b22 ** 2 + 2.0 * p1
    p = np.sqrt(np.maximum(p2, 0.0) / 6.0)
    near_iso = p < 1e-12
    ps = np.where(near_iso, 1.0, p)
    detB = (b00 * (b11 * b22 - a12 * a12)
            - a01 * (a01 * b22 - a12 * a02)
            + a02 * (a01 * a12 - b11 * a02)) / ps ** 3
    r = np.clip(detB / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)   # smallest eigenvalue

    r0 = np.stack([a00 - lam, a01, a02], axis=1)
    r1 = np.stack([a01, a11 - lam, a12], axis=1)
    r2 = np.stack([a02, a12, a22 - lam], axis=1)
    cands = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=1)
    norms = np.linalg.norm(cands, axis=2)
    best = np.argmax(norms, axis=1)
    idx = np.arange(C.shape[0])
    v = cands[idx, best]
    nrm = norms[idx, best]
    degenerate = bad | near_iso | (nrm < 1e-9)
    v = v / np.where(degenerate, 1.0, nrm)[:, None]
    v[degenerate] = np.nan
    return v


def estimate_normals(cloud: PointCloud, radius: float,
                     view_origin=(0.0, 0.0, 0.0),
                     max_neighbors: int = 16) -> np.ndarray:
    """Per-point normals from neighborhood covariance within `radius`.

    Points with fewer than 3 neighbors (self included) or a degenerate
    neighborhood get a NaN row; callers treat those as obstacles.
    Output normals point up when mostly vertical, otherwise toward the
    sensor origin.
    """
    if len(cloud) == 0:
        raise ValueError("cloud must be non-empty")
    pts = cloud.xyz
    n = len(pts)
    k = min(max_neighbors, n)
    tree = cKDTree(pts, balanced_tree=False, compact_nodes=False)
    dd, ii = tree.query(pts, k=k, distance_upper_bound=radius, workers=-1)
    if k == 1:
        dd, ii = dd[:, None], ii[:, None]
    valid = ii < n
    count = valid.sum(axis=1)
    ii = np.where(valid, ii, 0)
    rel = pts[ii] - pts[:, None, :]
    rel *= valid[:, :, None]
    cnt = np.maximum(count, 1).astype(float)
    mean = rel.sum(axis=1) / cnt[:, None]
    second = (rel.transpose(0, 2, 1) @ rel) / cnt[:, None, None]
    cov = second - mean[:, None, :] * mean[:, :, None]

    normals = _smallest_eigenvectors(cov)
    normals[count < 3] = np.nan

    # orient: up when the vertical component dominates, else toward the sensor
    az = np.abs(normals[:, 2])
    vertical = (az >= np.abs(normals[:, 0])) & (az >= np.abs(normals[:, 1]))
    to_sensor = np.asarray(view_origin, dtype=float) - pts
    sign = np.where(vertical, np.sign(normals[:, 2]),
                    np.sign(np.einsum("na,na->n", normals, to_sensor)))
    sign = np.where(sign == 0, 1.0, sign)
    return normals * sign[:, None]


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def euclidean_clusters(xyz: np.ndarray, tolerance: float, min_size: int = 1) -> list:
    """Connected components under dist <= tolerance.

    Exact single-linkage: points are binned into cells with diagonal <=
    tolerance (in-cell points connect for free), then candidate cell pairs
    are verified by their true minimum cross distance. Returns index arrays
    ordered by size descending, ties by smallest member index; components
    below min_size are dropped.
    """
    xyz = np.asarray(xyz, dtype=float)
    n = len(xyz)
    if n == 0:
        return []
    dim = xyz.shape[1]
    cell = tolerance / math.sqrt(dim)
    ijk = np.floor(xyz / cell).astype(np.int64)
    _, cell_id, counts = np.unique(ijk, axis=0, return_inverse=True,
                                   return_counts=True)
    if n < 64 or n / len(counts) < 2.0:
        # at near-voxel density the plain pair graph is cheaper
        labels = _pair_graph_labels(xyz, tolerance)
        return _split_components(labels, min_size)
    order = np.argsort(cell_id, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)])
    members = [order[starts[c]:starts[c + 1]] for c in range(len(counts))]

    dsu = _DisjointSet(n)
    for m in members:
        for k in range(1, len(m)):
            dsu.union(m[0], m[k])

    centroids = np.empty((len(members), dim))
    for c, m in enumerate(members):
        centroids[c] = xyz[m].mean(axis=0)
    tree = cKDTree(centroids, balanced_tree=False, compact_nodes=False)
    reach = tolerance + 2.0 * cell * math.sqrt(dim) / 2.0
    cand = tree.query_pairs(reach, output_type="ndarray")
    for a, b in cand:
        ra, rb = dsu.find(members[a][0]), dsu.find(members[b][0])
        if ra == rb:
            continue
        pa, pb = xyz[members[a]], xyz[members[b]]
        d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
        if d2.min() <= tolerance * tolerance:
            dsu.union(ra, rb)

    labels = np.fromiter((dsu.find(i) for i in range(n)), dtype=np.int64, count=n)
    return _split_components(labels, min_size)


def _pair_graph_labels(xyz: np.ndarray, tolerance: float) -> np.ndarray:
    from scipy import sparse
    from scipy.sparse.csgraph import connected_components

    n = len(xyz)
    tree = cKDTree(xyz, balanced_tree=False, compact_nodes=False)
    pairs = tree.query_pairs(tolerance, output_type="ndarray")
    if not len(pairs):
        return np.arange(n)
    adj = sparse.coo_matrix((np.ones(len(pairs), dtype=np.int8),
                             (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    return labels


def _split_components(labels: np.ndarray, min_size: int) -> list:
    order = np.argsort(labels, kind="stable")
    comps = np.split(order, np.nonzero(np.diff(labels[order]))[0] + 1)
    comps = [c for c in comps if len(c) >= min_size]
    comps.sort(key=lambda c: (-len(c), c.min()))
    return comps


def segment_ground(cloud: PointCloud, normals: np.ndarray,
                   angle_threshold: float = math.radians(20.0),
                   ground_height: float = 0.10,
                   region_tolerance: float = 0.10) -> LabeledCloud:
    """Partition into ground and obstacles.

    Near-horizontal points (normal within angle_threshold of +z) are grouped
    into connected regions; a region is ground only if its centroid sits
    below ground_height. Everything else, including points without normals,
    is an obstacle.
    """
    n = len(cloud)
    ground_mask = np.zeros(n, dtype=bool)
    if n:
        with np.errstate(invalid="ignore"):
            near_horizontal = normals[:, 2] >= math.cos(angle_threshold)
        near_horizontal &= np.isfinite(normals).all(axis=1)
        cand = np.nonzero(near_horizontal)[0]
        for comp in euclidean_clusters(cloud.xyz[cand], region_tolerance):
            idx = cand[comp]
            if cloud.xyz[idx, 2].mean() < ground_height:
                ground_mask[idx] = True
    return LabeledCloud(
        ground=PointCloud(cloud.xyz[ground_mask], cloud.frame),
        obstacles=PointCloud(cloud.xyz[~ground_mask], cloud.frame),
        ground_mask=ground_mask,
    )


def project_obstacles(labeled: LabeledCloud, leaf: float = 0.05) -> PointCloud:
    """Flatten obstacle points to z = 0, one centroid per leaf-sized 2D cell."""
    pts = labeled.obstacles.xyz
    if len(pts) == 0:
        return PointCloud.empty(labeled.obstacles.frame)
    ij = np.floor(pts[:, :2] / leaf).astype(np.int64)
    off = np.int64(1) << 31
    keys = ((ij[:, 0] + off) << 32) | (ij[:, 1] + off)
    uniq, inv = np.unique(keys, return_inverse=True)
    counts = np.bincount(inv).astype(float)
    out = np.zeros((uniq.size, 3))
    out[:, 0] = np.bincount(inv, weights=pts[:, 0]) / counts
    out[:, 1] = np.bincount(inv, weights=pts[:, 1]) / counts
    return PointCloud(out, labeled.obstacles.frame)


def cloud_to_scan(obstacles: PointCloud, cfg: ScanConfig,
                  origin: Pose2D = Pose2D()) -> PlanarScan:
    """Bin obstacle points by bearing, keeping the closest return per bin."""
    nbins = scan_bin_count(cfg)
    ranges = np.full(nbins, np.inf)
    pts = obstacles.xyz
    if len(pts):
        keep = (pts[:, 2] >= cfg.z_min) & (pts[:, 2] <= cfg.z_max)
        p = pts[keep]
        r = np.hypot(p[:, 0], p[:, 1])
        inr = r <= cfg.max_range
        p, r = p[inr], r[inr]
        bearing = np.arctan2(p[:, 1], p[:, 0])
        k = np.rint((bearing - cfg.angle_min) / cfg.angle_increment).astype(int)
        ok = (k >= 0) & (k < nbins)
        np.minimum.at(ranges, k[ok], r[ok])
    return PlanarScan(cfg.angle_min, cfg.angle_max, cfg.angle_increment,
                      ranges, origin, cfg.max_range)
