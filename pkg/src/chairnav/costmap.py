"""Rolling robot-centered local costmap: scan integration with ray-trace
clearing, exact-Euclidean inflation, and PGM export.

Grids are indexed [ix, iy] with world x along the first axis; cell (i, j)
covers [origin + i*res, origin + (i+1)*res). Cost encoding: 255 lethal,
254 inscribed, 253..1 decay band, 0 free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .config import CostmapConfig
from .geometry import Pose2D
from .obstacles import PlanarScan

LETHAL = 255
INSCRIBED = 254


class OutOfBounds(KeyError):
    pass


def inflation_costs(lethal: np.ndarray, resolution: float,
                    radius: float, decay_radius: float) -> np.ndarray:
    """Cost grid from a lethal mask: 254 within `radius` of any lethal cell,
    exponential falloff to 1 at decay_radius, 0 beyond."""
    cost = np.zeros(lethal.shape, dtype=np.uint8)
    if not lethal.any():
        return cost
    if radius > 0:
        dist = ndimage.distance_transform_edt(~lethal) * resolution
        cost[dist <= radius] = INSCRIBED
        if decay_radius > radius:
            k = math.log(253.0) / (decay_radius - radius)
            band = (dist > radius) & (dist <= decay_radius)
            cost[band] = np.clip(
                np.rint(253.0 * np.exp(-k * (dist[band] - radius))), 1, 253
            ).astype(np.uint8)
    cost[lethal] = LETHAL
    return cost


@dataclass
class Costmap:
    resolution: float
    cells: int
    origin: Pose2D                         # world pose of the (0, 0) cell corner
    config: CostmapConfig
    lethal: np.ndarray = field(default=None)
    cost: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.lethal is None:
            self.lethal = np.zeros((self.cells, self.cells), dtype=bool)
        if self.cost is None:
            self.cost = np.zeros((self.cells, self.cells), dtype=np.uint8)

    @staticmethod
    def centered(robot: Pose2D, cfg: CostmapConfig) -> "Costmap":
        cells = int(round(cfg.size / cfg.resolution))
        m = Costmap(cfg.resolution, cells, Pose2D(), cfg)
        ox, oy = m._origin_cells_for(robot)
        m.origin = Pose2D(ox * cfg.resolution, oy * cfg.resolution, 0.0)
        return m

    def _origin_cells_for(self, robot: Pose2D):
        c = self.cells // 2
        return (math.floor(robot.x / self.resolution) - c,
                math.floor(robot.y / self.resolution) - c)

    def cell_of(self, x: float, y: float):
        i = math.floor((x - self.origin.x) / self.resolution)
        j = math.floor((y - self.origin.y) / self.resolution)
        return i, j

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.cells and 0 <= j < self.cells

    def query_cost(self, x: float, y: float) -> int:
        i, j = self.cell_of(x, y)
        if not self.in_bounds(i, j):
            raise OutOfBounds(f"({x:.3f}, {y:.3f}) outside the local window")
        return int(self.cost[i, j])

    def recenter(self, robot: Pose2D) -> None:
        """Scroll the window so the robot cell is the center cell; cells
        scrolled in start free."""
        ox, oy = self._origin_cells_for(robot)
        di = ox - int(round(self.origin.x / self.resolution))
        dj = oy - int(round(self.origin.y / self.resolution))
        if di or dj:
            self.lethal = _shift2d(self.lethal, di, dj)
            self.origin = Pose2D(ox * self.resolution, oy * self.resolution, 0.0)
            self.reinflate()

    def reinflate(self, radius: float | None = None) -> None:
        r = self.config.inflation_radius if radius is None else radius
        self.cost = inflation_costs(self.lethal, self.resolution,
                                    r, self.config.decay_radius)

    def integrate_scan(self, scan: PlanarScan, robot: Pose2D) -> None:
        """Clear along every beam, mark finite returns lethal, reinflate."""
        bearings = robot.yaw + scan.bearings()
        r = np.where(np.isfinite(scan.ranges), scan.ranges, scan.max_range)
        ex = robot.x + r * np.cos(bearings)
        ey = robot.y + r * np.sin(bearings)
        finite = np.isfinite(scan.ranges)

        res = self.resolution
        sx = (robot.x - self.origin.x) / res
        sy = (robot.y - self.origin.y) / res
        exc = (ex - self.origin.x) / res
        eyc = (ey - self.origin.y) / res
        clear_i, clear_j, hit_i, hit_j = _trace_beams(
            sx, sy, exc, eyc, finite, self.cells)
        self.lethal[clear_i, clear_j] = False
        self.lethal[hit_i, hit_j] = True
        self.reinflate()


def _shift2d(a: np.ndarray, di: int, dj: int) -> np.ndarray:
    """Shift grid contents by (-di, -dj) cells, filling exposed cells with 0."""
    out = np.zeros_like(a)
    n0, n1 = a.shape
    if abs(di) >= n0 or abs(dj) >= n1:
        return out
    src_i = slice(max(0, di), min(n0, n0 + di))
    dst_i = slice(max(0, -di), max(0, min(n0, n0 - di)))
    src_j = slice(max(0, dj), min(n1, n1 + dj))
    dst_j = slice(max(0, -dj), max(0, min(n1, n1 - dj)))
    out[dst_i, dst_j] = a[src_i, src_j]
    return out


def _trace_beams(sx, sy, ex, ey, finite, cells):
    """Amanatides-Woo grid traversal for a fan of beams sharing one start.

    Coordinates are in cell units. Returns (clear_i, clear_j, hit_i, hit_j):
    cells strictly before each endpoint, and in-bounds endpoint cells of
    finite beams. Ties advance x first.
    """
    nb = ex.size
    ci = np.full(nb, math.floor(sx), dtype=np.int64)
    cj = np.full(nb, math.floor(sy), dtype=np.int64)
    end_i = np.floor(ex).astype(np.int64)
    end_j = np.floor(ey).astype(np.int64)
    dx = ex - sx
    dy = ey - sy

    with np.errstate(divide="ignore", invalid="ignore"):
        t_dx = np.where(dx != 0, 1.0 / np.abs(dx), np.inf)
        t_dy = np.where(dy != 0, 1.0 / np.abs(dy), np.inf)
        tmx = np.where(dx > 0, (ci + 1 - sx) / dx,
                       np.where(dx < 0, (ci - sx) / dx, np.inf))
        tmy = np.where(dy > 0, (cj + 1 - sy) / dy,
                       np.where(dy < 0, (cj - sy) / dy, np.inf))
    step_i = np.sign(dx).astype(np.int64)
    step_j = np.sign(dy).astype(np.int64)

    # infinite beams never "reach" their endpoint cell; they run off range
    end_i = np.where(finite, end_i, np.iinfo(np.int64).min)

    active = np.ones(nb, dtype=bool)
    clear_i, clear_j = [], []
    for _ in range(4 * cells + 4):
        at_end = active & (ci == end_i) & (cj == end_j)
        active &= ~at_end
        if not active.any():
            break
        inb = active & (ci >= 0) & (ci < cells) & (cj >= 0) & (cj < cells)
        if inb.any():
            clear_i.append(ci[inb].copy())
            clear_j.append(cj[inb].copy())
        go_x = tmx <= tmy
        t_next = np.where(go_x, tmx, tmy)
        past = t_next > 1.0
        active &= ~past
        adv_x = active & go_x
        adv_y = active & ~go_x
        ci[adv_x] += step_i[adv_x]
        tmx[adv_x] += t_dx[adv_x]
        cj[adv_y] += step_j[adv_y]
        tmy[adv_y] += t_dy[adv_y]

    hit = finite & (end_i >= 0) & (end_i < cells) & (end_j >= 0) & (end_j < cells)
    if clear_i:
        return (np.concatenate(clear_i), np.concatenate(clear_j),
                end_i[hit], end_j[hit])
    return (np.empty(0, np.int64), np.empty(0, np.int64), end_i[hit], end_j[hit])


def write_pgm(path, data: np.ndarray) -> None:
    """P5 graymap, maxval 255; rows follow the array's first axis."""
    a = np.asarray(data, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        f.write(a.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"P5":
            raise ValueError("not a P5 graymap")
        line = f.readline()
        while line.startswith(b"#"):
            line = f.readline()
        w, h = map(int, line.split())
        maxval = int(f.readline())
        if maxval != 255:
            raise ValueError("expected maxval 255")
        return np.frombuffer(f.read(w * h), dtype=np.uint8).reshape(h, w).copy()


def write_grid_meta(path, resolution: float, origin: Pose2D) -> None:
    with open(path, "w") as f:
        f.write(f"resolution {resolution!r}\n")
        f.write(f"origin {origin.x!r} {origin.y!r} {origin.yaw!r}\n")


def read_grid_meta(path):
    res, origin = None, None
    with open(path) as f:
        for line in f:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "resolution":
                res = float(tok[1])
            elif tok[0] == "origin":
                origin = Pose2D(float(tok[1]), float(tok[2]), float(tok[3]))
    if res is None or origin is None:
        raise ValueError(f"incomplete grid metadata in {path}")
    return res, origin


def export_costmap(m: Costmap, pgm_path, meta_path=None) -> None:
    write_pgm(pgm_path, m.cost)
    if meta_path is None:
        meta_path = str(pgm_path) + ".meta"
    write_grid_meta(meta_path, m.resolution, m.origin)
