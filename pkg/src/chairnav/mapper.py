"""Pose-graph mapping over 2D projected obstacle scans.

Consecutive node transforms are refined by point-to-point ICP; loop
closures come from distance-gated scan matching; graph optimization is
damped Gauss-Newton over SE(2) with node 0 fixed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import MapperConfig
from .costmap import _trace_beams, read_grid_meta, read_pgm, write_grid_meta, write_pgm
from .geometry import Pose2D, PointCloud, compose, relative, wrap_angle
from .obstacles import PlanarScan

FREE, OCCUPIED, UNKNOWN = 0, 1, 2


class ModeError(RuntimeError):
    pass


@dataclass
class MapNode:
    id: int
    odom_pose: Pose2D
    opt_pose: Pose2D
    scan: PointCloud               # 2D projected obstacles, node frame (z = 0)


@dataclass
class GraphEdge:
    from_id: int
    to_id: int
    relative: Pose2D
    kind: str                      # odometry | refined | loop_closure
    information: np.ndarray        # (3, 3)


@dataclass
class GlobalGrid:
    data: np.ndarray               # (nx, ny) uint8 of FREE/OCCUPIED/UNKNOWN
    resolution: float
    origin: Pose2D

    def occupied_cells(self) -> np.ndarray:
        return np.argwhere(self.data == OCCUPIED)

    def occupied_points(self) -> np.ndarray:
        """World coordinates of occupied cell centers."""
        ij = self.occupied_cells()
        return ij * self.resolution + np.array([self.origin.x, self.origin.y]) \
            + self.resolution / 2.0


class PoseGraph:
    def __init__(self, cfg: MapperConfig | None = None):
        self.cfg = cfg or MapperConfig()
        self.nodes: list[MapNode] = []
        self.edges: list[GraphEdge] = []
        self.mode = "slam"

    def set_mode(self, mode: str) -> None:
        if mode not in ("slam", "localization"):
            raise ValueError(mode)
        self.mode = mode

    def add_node(self, odom: Pose2D, scan: PointCloud) -> int:
        """Append a node with an odometry edge; try to refine that edge by
        scan matching against the previous node."""
        if self.mode != "slam":
            raise ModeError("graph is immutable in localization mode")
        nid = len(self.nodes)
        if nid == 0:
            self.nodes.append(MapNode(0, odom, odom, scan))
            return 0
        prev = self.nodes[-1]
        rel = relative(prev.odom_pose, odom)
        kind, info = "odometry", np.diag(self.cfg.info_odom).astype(float)
        refined = refine_consecutive(prev, MapNode(nid, odom, odom, scan), self.cfg)
        if refined is not None:
            rel, kind = refined, "refined"
            info = np.diag(self.cfg.info_refined).astype(float)
        opt = compose(prev.opt_pose, rel)
        self.nodes.append(MapNode(nid, odom, opt, scan))
        self.edges.append(GraphEdge(nid - 1, nid, rel, kind, info))
        return nid

    def content_hash(self) -> int:
        acc = []
        for n in self.nodes:
            acc.append(n.odom_pose.as_array())
            acc.append(n.opt_pose.as_array())
            acc.append(np.array([float(len(n.scan))]))
        for e in self.edges:
            acc.append(np.array([e.from_id, e.to_id], dtype=float))
            acc.append(e.relative.as_array())
        if not acc:
            return 0
        return hash(np.concatenate(acc).tobytes())


def icp_2d(src: np.ndarray, dst: np.ndarray, seed: Pose2D, cfg: MapperConfig):
    """Point-to-point 2D ICP aligning src onto dst, seeded with `seed`.

    Returns (pose, mean_residual, inlier_fraction) or None when degenerate
    or the gates fail.
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) < cfg.icp_min_points or len(dst) < cfg.icp_min_points:
        return None
    tree = cKDTree(dst)
    c, s = math.cos(seed.yaw), math.sin(seed.yaw)
    R = np.array([[c, -s], [s, c]])
    t = np.array([seed.x, seed.y])
    for _ in range(cfg.icp_max_iterations):
        moved = src @ R.T + t
        dd, ii = tree.query(moved, distance_upper_bound=cfg.icp_corr_dist)
        ok = ii < len(dst)
        if ok.sum() < cfg.icp_min_points:
            return None
        a = src[ok]
        b = dst[ii[ok]]
        ca, cb = a.mean(axis=0), b.mean(axis=0)
        H = (a - ca).T @ (b - cb)
        U, _, Vt = np.linalg.svd(H)
        D = np.diag([1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
        R_new = Vt.T @ D @ U.T
        t_new = cb - R_new @ ca
        if (np.abs(R_new - R).max() < 1e-10
                and np.abs(t_new - t).max() < 1e-10):
            R, t = R_new, t_new
            break
        R, t = R_new, t_new

    moved = src @ R.T + t
    dd, ii = tree.query(moved, distance_upper_bound=cfg.icp_corr_dist)
    inlier = (ii < len(dst)) & (dd <= cfg.icp_inlier_dist)
    frac = inlier.sum() / len(src)
    if inlier.sum() < cfg.icp_min_points:
        return None
    residual = float(dd[inlier].mean())
    if residual >= cfg.icp_max_residual or frac <= cfg.icp_min_inlier_frac:
        return None
    pose = Pose2D(float(t[0]), float(t[1]), math.atan2(R[1, 0], R[0, 0]))
    return pose, residual, float(frac)


def refine_consecutive(a: MapNode, b: MapNode, cfg: MapperConfig) -> Pose2D | None:
    """ICP-refined pose of node b in node a's frame, odometry-seeded;
    None when the match does not pass the acceptance gates."""
    if len(a.scan) == 0 or len(b.scan) == 0:
        return None
    seed = relative(a.odom_pose, b.odom_pose)
    out = icp_2d(b.scan.xyz[:, :2], a.scan.xyz[:, :2], seed, cfg)
    return out[0] if out is not None else None


def detect_loop_closure(graph: PoseGraph, current: MapNode) -> GraphEdge | None:
    """Scan-match the current node against older nodes within the gate
    radius; best passing match becomes a loop-closure edge."""
    cfg = graph.cfg
    cutoff = current.id - cfg.loop_exclude_last
    cand = [n for n in graph.nodes[:max(cutoff, 0)]
            if math.hypot(n.opt_pose.x - current.opt_pose.x,
                          n.opt_pose.y - current.opt_pose.y) <= cfg.loop_gate_radius]
    cand.sort(key=lambda n: math.hypot(n.opt_pose.x - current.opt_pose.x,
                                       n.opt_pose.y - current.opt_pose.y))
    best = None
    for n in cand[:8]:
        seed = relative(n.opt_pose, current.opt_pose)
        out = icp_2d(current.scan.xyz[:, :2], n.scan.xyz[:, :2], seed, cfg)
        if out is None:
            continue
        pose, residual, _ = out
        if best is None or residual < best[1]:
            best = (n.id, residual, pose)
    if best is None:
        return None
    return GraphEdge(best[0], current.id, best[2], "loop_closure",
                     np.diag(cfg.info_refined).astype(float))


def _edge_residual(xi, xj, z: Pose2D):
    ci, si = math.cos(xi[2]), math.sin(xi[2])
    cz, sz = math.cos(z.yaw), math.sin(z.yaw)
    RiT = np.array([[ci, si], [-si, ci]])
    RzT = np.array([[cz, sz], [-sz, cz]])
    dt = xj[:2] - xi[:2]
    e = np.empty(3)
    e[:2] = RzT @ (RiT @ dt - np.array([z.x, z.y]))
    e[2] = wrap_angle(xj[2] - xi[2] - z.yaw)
    dRiT = np.array([[-si, ci], [-ci, -si]])
    A = np.zeros((3, 3))
    A[:2, :2] = -RzT @ RiT
    A[:2, 2] = RzT @ (dRiT @ dt)
    A[2, 2] = -1.0
    B = np.zeros((3, 3))
    B[:2, :2] = RzT @ RiT
    B[2, 2] = 1.0
    return e, A, B


def _total_error(x: np.ndarray, edges) -> float:
    total = 0.0
    for e in edges:
        r, _, _ = _edge_residual(x[e.from_id], x[e.to_id], e.relative)
        total += float(r @ e.information @ r)
    return total


def optimize_graph(graph: PoseGraph) -> bool:
    """Damped Gauss-Newton over all poses (node 0 fixed). Updates opt_poses
    in place; returns False when the gradient tolerance was not reached."""
    cfg = graph.cfg
    n = len(graph.nodes)
    if n <= 1 or not graph.edges:
        return True
    x = np.array([nd.opt_pose.as_array() for nd in graph.nodes])
    err = _total_error(x, graph.edges)
    converged = False
    for _ in range(cfg.optimizer_max_iterations):
        H = np.zeros((3 * n, 3 * n))
        b = np.zeros(3 * n)
        for e in graph.edges:
            r, A, B = _edge_residual(x[e.from_id], x[e.to_id], e.relative)
            i, j = 3 * e.from_id, 3 * e.to_id
            W = e.information
            H[i:i + 3, i:i + 3] += A.T @ W @ A
            H[i:i + 3, j:j + 3] += A.T @ W @ B
            H[j:j + 3, i:i + 3] += B.T @ W @ A
            H[j:j + 3, j:j + 3] += B.T @ W @ B
            b[i:i + 3] += A.T @ W @ r
            b[j:j + 3] += B.T @ W @ r
        if np.linalg.norm(b[3:]) < cfg.optimizer_grad_tol:
            converged = True
            break
        Hr = H[3:, 3:] + 1e-9 * np.eye(3 * (n - 1))
        try:
            dx = np.linalg.solve(Hr, -b[3:])
        except np.linalg.LinAlgError:
            break
        # halve the step until the weighted error does not increase
        step, accepted = 1.0, False
        for _ in range(12):
            x_new = x.copy()
            x_new[1:] += (step * dx).reshape(-1, 3)
            x_new[:, 2] = wrap_angle(x_new[:, 2])
            err_new = _total_error(x_new, graph.edges)
            if err_new <= err + 1e-15:
                x, err, accepted = x_new, err_new, True
                break
            step *= 0.5
        if not accepted:
            break
    for nd, row in zip(graph.nodes, x):
        nd.opt_pose = Pose2D.from_array(row)
    return converged


def assemble_global_grid(graph: PoseGraph, resolution: float,
                         margin: float = 0.5) -> GlobalGrid:
    """Ray-trace every node scan from its optimized pose into a trinary
    grid. Occupied wins ties; untouched cells stay unknown."""
    pts_all, orig_all = [], []
    for nd in graph.nodes:
        c, s = math.cos(nd.opt_pose.yaw), math.sin(nd.opt_pose.yaw)
        xy = nd.scan.xyz[:, :2]
        world = xy @ np.array([[c, s], [-s, c]]) + np.array([nd.opt_pose.x, nd.opt_pose.y])
        pts_all.append(world)
        orig_all.append([nd.opt_pose.x, nd.opt_pose.y])
    if not orig_all:
        return GlobalGrid(np.full((1, 1), UNKNOWN, dtype=np.uint8), resolution, Pose2D())
    orig_all = np.array(orig_all)
    stack = np.vstack(pts_all + [orig_all])
    lo = np.floor((stack.min(axis=0) - margin) / resolution) * resolution
    hi = stack.max(axis=0) + margin
    nx = int(math.ceil((hi[0] - lo[0]) / resolution)) + 1
    ny = int(math.ceil((hi[1] - lo[1]) / resolution)) + 1
    free = np.zeros((nx, ny), dtype=bool)
    occ = np.zeros((nx, ny), dtype=bool)
    for world, o in zip(pts_all, orig_all):
        if len(world) == 0:
            continue
        sx = (o[0] - lo[0]) / resolution
        sy = (o[1] - lo[1]) / resolution
        ex = (world[:, 0] - lo[0]) / resolution
        ey = (world[:, 1] - lo[1]) / resolution
        finite = np.ones(len(world), dtype=bool)
        ci, cj, hi_i, hi_j = _trace_beams(sx, sy, ex, ey, finite, max(nx, ny))
        inb = (ci < nx) & (cj < ny)
        free[ci[inb], cj[inb]] = True
        inb = (hi_i < nx) & (hi_j < ny)
        occ[hi_i[inb], hi_j[inb]] = True
    data = np.full((nx, ny), UNKNOWN, dtype=np.uint8)
    data[free] = FREE
    data[occ] = OCCUPIED
    return GlobalGrid(data, resolution, Pose2D(float(lo[0]), float(lo[1]), 0.0))


def localize(grid: GlobalGrid, scan: PlanarScan, odom: Pose2D,
             cfg: MapperConfig | None = None):
    """Match a scan against occupied cells, seeded by odometry.

    Returns (pose, corrected): the odometry pose flagged uncorrected when
    the match fails the gates.
    """
    cfg = cfg or MapperConfig()
    src = scan.points()
    dst = grid.occupied_points()
    if len(src) == 0 or len(dst) == 0:
        return odom, False
    out = icp_2d(src, dst, odom, cfg)
    if out is None:
        return odom, False
    return out[0], True


def double_wall_count(grid: GlobalGrid, d_min: int = 2, d_max: int = 6) -> int:
    """Occupied cells that see another occupied cell d_min..d_max cells away
    along the local wall normal — the drift-induced double-wall artifact."""
    cells = grid.occupied_cells()
    if len(cells) == 0:
        return 0
    occ = grid.data == OCCUPIED
    tree = cKDTree(cells)
    neighbor_lists = tree.query_ball_point(cells, 3.0)
    count = 0
    nx, ny = occ.shape
    for idx, neigh in enumerate(neighbor_lists):
        pts = cells[neigh] - cells[idx]
        if len(pts) < 2:
            continue
        cov = pts.T @ pts / len(pts)
        evals, evecs = np.linalg.eigh(cov)
        normal = evecs[:, 0]                # direction across the wall
        hit = False
        for sign in (1.0, -1.0):
            for k in range(d_min, d_max + 1):
                i = int(round(cells[idx, 0] + sign * k * normal[0]))
                j = int(round(cells[idx, 1] + sign * k * normal[1]))
                if 0 <= i < nx and 0 <= j < ny and occ[i, j]:
                    hit = True
                    break
            if hit:
                break
        count += hit
    return int(count)


# --- session persistence ----------------------------------------------------

def save_session(graph: PoseGraph, grid: GlobalGrid, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    scandir = os.path.join(directory, "scans")
    os.makedirs(scandir, exist_ok=True)
    with open(os.path.join(directory, "graph.tsv"), "w") as f:
        for nd in graph.nodes:
            o, p = nd.odom_pose, nd.opt_pose
            f.write(f"{nd.id}\t{o.x!r}\t{o.y!r}\t{o.yaw!r}\t"
                    f"{p.x!r}\t{p.y!r}\t{p.yaw!r}\t{len(nd.scan)}\n")
            nd.scan.xyz[:, :2].astype("<f8").tofile(
                os.path.join(scandir, f"{nd.id}.bin"))
    export_global_grid(grid, os.path.join(directory, "grid.pgm"))


def load_session(directory, cfg: MapperConfig | None = None):
    graph = PoseGraph(cfg)
    with open(os.path.join(directory, "graph.tsv")) as f:
        for line in f:
            tok = line.split("\t")
            nid = int(tok[0])
            xy = np.fromfile(os.path.join(directory, "scans", f"{nid}.bin"),
                             dtype="<f8").reshape(-1, 2)
            pts = np.column_stack([xy, np.zeros(len(xy))])
            graph.nodes.append(MapNode(
                nid,
                Pose2D(float(tok[1]), float(tok[2]), float(tok[3])),
                Pose2D(float(tok[4]), float(tok[5]), float(tok[6])),
                PointCloud(pts, "base")))
    grid = import_global_grid(os.path.join(directory, "grid.pgm"))
    graph.set_mode("localization")
    return graph, grid


_PGM_VALUES = {OCCUPIED: 0, FREE: 255, UNKNOWN: 127}
_PGM_INVERSE = {0: OCCUPIED, 255: FREE, 127: UNKNOWN}


def export_global_grid(grid: GlobalGrid, pgm_path, meta_path=None) -> None:
    img = np.full(grid.data.shape, 127, dtype=np.uint8)
    img[grid.data == OCCUPIED] = 0
    img[grid.data == FREE] = 255
    write_pgm(pgm_path, img)
    if meta_path is None:
        meta_path = str(pgm_path) + ".meta"
    write_grid_meta(meta_path, grid.resolution, grid.origin)


def import_global_grid(pgm_path, meta_path=None) -> GlobalGrid:
    if meta_path is None:
        meta_path = str(pgm_path) + ".meta"
    img = read_pgm(pgm_path)
    res, origin = read_grid_meta(meta_path)
    data = np.full(img.shape, UNKNOWN, dtype=np.uint8)
    data[img == 0] = OCCUPIED
    data[img == 255] = FREE
    return GlobalGrid(data, res, origin)
