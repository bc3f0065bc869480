"""Doorway detection and traversal planning from 3D obstacle clouds.

Walls are pulled out one at a time with a verticality-constrained RANSAC,
trimmed to their midsection, and clustered; untested cluster pairs become
door candidates routed to the single-plane (gap within one wall) or
double-plane (wall meets protruding leaf) edge finder, then validated for
width and free space. Failed walls are removed and the search repeats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DoorConfig
from .geometry import Plane, PointCloud, Pose2D, compose
from .obstacles import euclidean_clusters


class DoorPipelineError(RuntimeError):
    pass


class InsufficientPoints(DoorPipelineError):
    pass


class NoVerticalPlane(DoorPipelineError):
    pass


class DegenerateOverlap(DoorPipelineError):
    pass


class NearParallel(DoorPipelineError):
    pass


class WidthOutOfRange(DoorPipelineError):
    pass


class Blocked(DoorPipelineError):
    pass


class NotFound(DoorPipelineError):
    pass


@dataclass
class WallCluster:
    points: PointCloud
    plane: Plane
    span: tuple                      # (min, max) of the in-plane lateral coord


@dataclass
class DoorCandidate:
    left: WallCluster
    right: WallCluster
    geometry: str                    # single_plane | double_plane


@dataclass
class DoorDetection:
    left_edge: np.ndarray            # (3,), z = 0
    right_edge: np.ndarray
    width: float
    door_plane: Plane
    approach_normal: np.ndarray      # (2,) unit, pointing from door toward chair


def lateral_direction(plane: Plane) -> np.ndarray:
    """Horizontal unit vector along the wall, oriented toward +y (sensor left)."""
    u = np.array([-plane.normal[1], plane.normal[0]])
    n = np.linalg.norm(u)
    if n < 1e-9:
        raise ValueError("plane is horizontal; no wall direction")
    u = u / n
    if u[1] < 0 or (u[1] == 0 and u[0] < 0):
        u = -u
    return u


def extract_wall_plane(cloud: PointCloud, rng: np.random.Generator,
                       cfg: DoorConfig):
    """Most prominent near-vertical plane by 3-point RANSAC, least-squares
    refit on its inliers. Returns (plane, inliers, remainder)."""
    n = len(cloud)
    if n < cfg.min_points:
        raise InsufficientPoints(f"{n} points < {cfg.min_points}")
    pts = cloud.xyz
    pts32 = pts.astype(np.float32)

    idx = rng.integers(0, n, size=(cfg.ransac_iterations, 3))
    p1, p2, p3 = pts[idx[:, 0]], pts[idx[:, 1]], pts[idx[:, 2]]
    normals = np.cross(p2 - p1, p3 - p1)
    norms = np.linalg.norm(normals, axis=1)
    ok = norms > 1e-12
    normals[ok] /= norms[ok, None]
    vertical = ok & (np.abs(normals[:, 2]) <= cfg.vertical_tolerance)
    d = -np.einsum("ij,ij->i", normals, p1)

    counts = np.zeros(cfg.ransac_iterations, dtype=np.int64)
    cand = np.nonzero(vertical)[0]
    n32 = normals.astype(np.float32)
    d32 = d.astype(np.float32)
    for c0 in range(0, len(cand), 64):
        sel = cand[c0:c0 + 64]
        dist = np.abs(pts32 @ n32[sel].T + d32[sel])
        counts[sel] = (dist <= cfg.inlier_threshold).sum(axis=0)
    best = int(np.argmax(counts))
    if counts[best] < cfg.min_inliers:
        raise NoVerticalPlane(f"best vertical candidate has {counts[best]} inliers")

    plane = Plane(normals[best], d[best])
    dist = np.abs(pts @ plane.normal + plane.d)
    mask = dist <= cfg.inlier_threshold

    # total-least-squares refit, kept only while still near-vertical
    sub = pts[mask]
    centroid = sub.mean(axis=0)
    cov = (sub - centroid).T @ (sub - centroid) / len(sub)
    evals, evecs = np.linalg.eigh(cov)
    nf = evecs[:, 0]
    if abs(nf[2]) <= cfg.vertical_tolerance:
        plane = Plane(nf, -float(nf @ centroid))
        dist = np.abs(pts @ plane.normal + plane.d)
        mask = dist <= cfg.inlier_threshold
    if plane.d < 0 or (plane.d == 0 and (plane.normal[0] < 0
                                         or (plane.normal[0] == 0 and plane.normal[1] < 0))):
        plane = Plane(-plane.normal, -plane.d)

    inliers = PointCloud(pts[mask], cloud.frame)
    remainder = PointCloud(pts[~mask], cloud.frame)
    return plane, inliers, remainder


def midsection_filter(inliers: PointCloud, z_lo: float, z_hi: float) -> PointCloud:
    if z_lo >= z_hi:
        raise ValueError("need z_lo < z_hi")
    keep = (inliers.z >= z_lo) & (inliers.z <= z_hi)
    return PointCloud(inliers.xyz[keep], inliers.frame)


def cluster_wall(points: PointCloud, plane: Plane, tolerance: float,
                 min_size: int) -> list[WallCluster]:
    """Euclidean clusters of a midsection-filtered wall, largest first."""
    if len(points) == 0:
        return []
    u = lateral_direction(plane)
    comps = euclidean_clusters(points.xyz, tolerance, min_size)
    out = []
    for comp in comps:
        sub = points.xyz[comp]
        s = sub[:, :2] @ u
        out.append(WallCluster(PointCloud(sub, points.frame), plane,
                               (float(s.min()), float(s.max()))))
    out.sort(key=lambda c: (-len(c.points), c.span[0]))
    return out


def pair_candidates(clusters: list[WallCluster], tested: set,
                    parallel_tolerance_deg: float = 10.0) -> list[DoorCandidate]:
    """Every untested unordered pair; near-parallel planes route to the
    single-plane detector, intersecting ones to the double-plane detector."""
    out = []
    for j in range(len(clusters)):
        for i in range(j):
            key = (i, j)
            if key in tested:
                continue
            tested.add(key)
            a, b = clusters[i], clusters[j]
            cosang = abs(float(a.plane.normal @ b.plane.normal))
            angle = math.degrees(math.acos(min(1.0, cosang)))
            geom = "single_plane" if angle <= parallel_tolerance_deg else "double_plane"
            out.append(DoorCandidate(a, b, geom))
    return out


def detect_single_plane(c: DoorCandidate):
    """Edges of a gap within one wall plane: order the clusters along the
    wall line and take the gap-side extremum of each."""
    plane = c.left.plane if len(c.left.points) >= len(c.right.points) else c.right.plane
    u = lateral_direction(plane)
    sa = c.left.points.xyz[:, :2] @ u
    sb = c.right.points.xyz[:, :2] @ u
    if sa.min() >= sb.max():
        upper, s_up, lower, s_lo = c.left, sa, c.right, sb
    elif sb.min() >= sa.max():
        upper, s_up, lower, s_lo = c.right, sb, c.left, sa
    else:
        raise DegenerateOverlap("cluster spans overlap on the wall line")
    left_pt = upper.points.xyz[int(np.argmin(s_up))].copy()
    right_pt = lower.points.xyz[int(np.argmax(s_lo))].copy()
    left_pt[2] = 0.0
    right_pt[2] = 0.0
    return left_pt, right_pt


def detect_double_plane(c: DoorCandidate, parallel_tolerance_deg: float = 10.0):
    """Edges of a doorway bounded by two intersecting planes: the point of
    each cluster nearest the planes' z = 0 intersection."""
    n1, d1 = c.left.plane.normal, c.left.plane.d
    n2, d2 = c.right.plane.normal, c.right.plane.d
    cosang = abs(float(n1 @ n2))
    if math.degrees(math.acos(min(1.0, cosang))) <= parallel_tolerance_deg:
        raise NearParallel("planes should have been routed single-plane")
    A = np.array([[n1[0], n1[1]], [n2[0], n2[1]]])
    if abs(np.linalg.det(A)) < 1e-6:
        raise NearParallel("z = 0 traces are parallel")
    q = np.linalg.solve(A, -np.array([d1, d2]))

    edges = []
    for cl in (c.left, c.right):
        xy = cl.points.xyz[:, :2]
        i = int(np.argmin(np.hypot(xy[:, 0] - q[0], xy[:, 1] - q[1])))
        p = cl.points.xyz[i].copy()
        p[2] = 0.0
        edges.append(p)
    # left has the greater lateral (sensor +y) coordinate
    if edges[0][1] >= edges[1][1]:
        return edges[0], edges[1]
    return edges[1], edges[0]


def validate_door(edges, cloud: PointCloud, cfg: DoorConfig,
                  chair_xy=(0.0, 0.0)) -> DoorDetection:
    """Check width bounds and that the gap prism is free of stray points."""
    left, right = np.asarray(edges[0], dtype=float), np.asarray(edges[1], dtype=float)
    gap = right[:2] - left[:2]
    width = float(np.hypot(gap[0], gap[1]))
    if not (cfg.width_min <= width <= cfg.width_max):
        raise WidthOutOfRange(f"width {width:.3f} outside "
                              f"[{cfg.width_min}, {cfg.width_max}]")
    u = gap / width
    normal3 = np.array([-u[1], u[0], 0.0])
    plane = Plane(normal3, -float(normal3[:2] @ left[:2]))

    pts = cloud.xyz
    off = np.abs(pts @ plane.normal + plane.d)
    s = pts[:, :2] @ u
    s_lo = float(left[:2] @ u) + cfg.gap_inset
    s_hi = float(right[:2] @ u) - cfg.gap_inset
    inside = ((off <= cfg.gap_half_depth) & (s >= s_lo) & (s <= s_hi)
              & (pts[:, 2] >= cfg.gap_z[0]) & (pts[:, 2] <= cfg.gap_z[1]))
    stray = int(inside.sum())
    if stray >= cfg.stray_threshold:
        raise Blocked(f"{stray} stray points in the gap prism")

    center = (left[:2] + right[:2]) / 2.0
    n2 = plane.normal[:2] / np.linalg.norm(plane.normal[:2])
    if float(n2 @ (np.asarray(chair_xy) - center)) < 0:
        n2 = -n2
    return DoorDetection(left, right, width, plane, n2)


def detect_door(cloud: PointCloud, seed: int, cfg: DoorConfig | None = None,
                log: list | None = None) -> DoorDetection:
    """Full detection episode over an obstacle cloud in the sensor frame.

    Walls are extracted, clustered, and paired until a candidate validates;
    exhausted walls are removed from the cloud. Raises NotFound when the
    remainder drops below the point floor with no validated door.
    """
    cfg = cfg or DoorConfig()
    rng = np.random.default_rng(seed)
    remaining = cloud
    clusters: list[WallCluster] = []
    tested: set = set()
    while len(remaining) >= cfg.min_points:
        try:
            plane, inliers, rest = extract_wall_plane(remaining, rng, cfg)
        except NoVerticalPlane as e:
            if log is not None:
                log.append(f"stop: {e}")
            raise NotFound(str(e)) from e
        mid = midsection_filter(inliers, *cfg.midsection_z)
        new = cluster_wall(mid, plane, cfg.cluster_tolerance, cfg.cluster_min_size)
        clusters.extend(new)
        if log is not None:
            log.append(f"wall n=({plane.normal[0]:.3f},{plane.normal[1]:.3f},"
                       f"{plane.normal[2]:.3f}) d={plane.d:.3f} "
                       f"inliers={len(inliers)} clusters=+{len(new)}")
            for cl in new:
                log.append(f"  cluster size={len(cl.points)} "
                           f"span=({cl.span[0]:.3f},{cl.span[1]:.3f})")
        for cand in pair_candidates(clusters, tested, cfg.parallel_tolerance_deg):
            try:
                if cand.geometry == "single_plane":
                    edges = detect_single_plane(cand)
                else:
                    edges = detect_double_plane(cand, cfg.parallel_tolerance_deg)
                det = validate_door(edges, cloud, cfg)
            except DoorPipelineError as e:
                if log is not None:
                    log.append(f"  candidate {cand.geometry}: {type(e).__name__}")
                continue
            if log is not None:
                log.append(f"  accepted {cand.geometry} width={det.width:.3f} "
                           f"edges=({det.left_edge[0]:.3f},{det.left_edge[1]:.3f})/"
                           f"({det.right_edge[0]:.3f},{det.right_edge[1]:.3f})")
            return det
        remaining = rest
    raise NotFound(f"{len(remaining)} points left below floor {cfg.min_points}")


def plan_traversal_goals(d: DoorDetection, chair_pose: Pose2D,
                         cfg: DoorConfig | None = None) -> list[Pose2D]:
    """Aligned goal ladder through the door: from the standoff point up to
    the frame center and a final goal past it, all on the door axis.

    The detection is in the chair's sensor frame; returned goals are in the
    frame of `chair_pose` (the chair's parent frame).
    """
    cfg = cfg or DoorConfig()
    center = (d.left_edge[:2] + d.right_edge[:2]) / 2.0
    axis = -d.approach_normal
    dist = float(np.hypot(center[0], center[1]))
    d0 = max(min(dist - cfg.goal_standoff_margin, cfg.goal_standoff_max), 0.0)
    offsets = []
    o = -d0
    while o < -1e-9:
        offsets.append(o)
        o += cfg.goal_spacing
    offsets += [0.0, cfg.goal_post]
    heading = math.atan2(axis[1], axis[0])
    goals = []
    for o in offsets:
        p = center + o * axis
        goals.append(compose(chair_pose, Pose2D(float(p[0]), float(p[1]), heading)))
    return goals


def advance_filter(cloud: PointCloud, traveled_x: float, cutoff: float) -> PointCloud:
    """Drop points past the doorway as the chair advances: keep
    x <= cutoff - traveled_x."""
    if traveled_x < 0:
        raise ValueError("traveled_x must be >= 0")
    keep = cloud.x <= cutoff - traveled_x
    return PointCloud(cloud.xyz[keep], cloud.frame)
