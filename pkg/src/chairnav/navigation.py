"""Global grid planning and differential-drive velocity generation.

The global planner is 8-connected A* over an inflated cost grid; the local
planner samples velocity pairs inside the acceleration window, rolls them
out, and scores goal distance, traversal cost, and heading.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .config import ChairConfig, DwaConfig
from .costmap import INSCRIBED, LETHAL, Costmap
from .geometry import Pose2D, wrap_angle


class PlanningError(RuntimeError):
    pass


class StartInObstacle(PlanningError):
    pass


class GoalInObstacle(PlanningError):
    pass


class NoPath(PlanningError):
    pass


class Trapped(PlanningError):
    pass


@dataclass(frozen=True)
class VelocityCommand:
    v: float = 0.0
    w: float = 0.0


@dataclass
class GlobalPath:
    waypoints: np.ndarray            # (N, 2) world coordinates of cell centers
    total_cost: float


_SQRT2 = math.sqrt(2.0)
_NEIGHBORS = [(-1, -1, _SQRT2), (-1, 0, 1.0), (-1, 1, _SQRT2),
              (0, -1, 1.0), (0, 1, 1.0),
              (1, -1, _SQRT2), (1, 0, 1.0), (1, 1, _SQRT2)]


def plan_global(cost: np.ndarray, resolution: float, origin: Pose2D,
                start: Pose2D, goal: Pose2D, cost_gain: float = 1.0) -> GlobalPath:
    """Minimum-cost 8-connected path; step cost is metric length scaled by
    (1 + cost_gain * cellcost/253) so paths prefer clearance."""
    nx, ny = cost.shape
    si = (math.floor((start.x - origin.x) / resolution),
          math.floor((start.y - origin.y) / resolution))
    gi = (math.floor((goal.x - origin.x) / resolution),
          math.floor((goal.y - origin.y) / resolution))
    for (i, j), err, name in ((si, StartInObstacle, "start"), (gi, GoalInObstacle, "goal")):
        if not (0 <= i < nx and 0 <= j < ny):
            raise err(f"{name} cell ({i}, {j}) outside the grid")
        if cost[i, j] >= INSCRIBED:
            raise err(f"{name} cell ({i}, {j}) has cost {cost[i, j]}")

    def heuristic(i, j):
        return math.hypot(i - gi[0], j - gi[1]) * resolution

    g = {si: 0.0}
    parent = {}
    heap = [(heuristic(*si), 0, si)]
    tick = 0
    closed = set()
    while heap:
        _, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == gi:
            break
        closed.add(cur)
        ci, cj = cur
        for di, dj, step in _NEIGHBORS:
            ni, nj = ci + di, cj + dj
            if not (0 <= ni < nx and 0 <= nj < ny):
                continue
            c = cost[ni, nj]
            if c >= INSCRIBED:
                continue
            cand = g[cur] + step * resolution * (1.0 + cost_gain * c / 253.0)
            if cand < g.get((ni, nj), math.inf):
                g[(ni, nj)] = cand
                parent[(ni, nj)] = cur
                tick += 1
                heapq.heappush(heap, (cand + heuristic(ni, nj), tick, (ni, nj)))
    if gi not in g:
        raise NoPath("goal unreachable")

    cells = [gi]
    while cells[-1] != si:
        cells.append(parent[cells[-1]])
    cells.reverse()
    wp = np.array([[origin.x + (i + 0.5) * resolution,
                    origin.y + (j + 0.5) * resolution] for i, j in cells])
    return GlobalPath(wp, g[gi])


def select_subgoal(path: GlobalPath, robot: Pose2D, window: float) -> Pose2D:
    """Farthest waypoint (by path order) within `window` of the robot;
    heading follows the path tangent."""
    wp = path.waypoints
    if len(wp) == 0:
        raise ValueError("empty path")
    d = np.hypot(wp[:, 0] - robot.x, wp[:, 1] - robot.y)
    inside = np.nonzero(d <= window)[0]
    k = int(inside[-1]) if len(inside) else 0
    if k + 1 < len(wp):
        tangent = wp[k + 1] - wp[k]
    elif len(wp) > 1:
        tangent = wp[k] - wp[k - 1]
    else:
        tangent = np.array([math.cos(robot.yaw), math.sin(robot.yaw)])
    return Pose2D(wp[k, 0], wp[k, 1], math.atan2(tangent[1], tangent[0]))


def goal_reached(robot: Pose2D, goal: Pose2D,
                 pos_tol: float = 0.10, yaw_tol: float = 0.15) -> bool:
    return (math.hypot(robot.x - goal.x, robot.y - goal.y) <= pos_tol
            and abs(wrap_angle(robot.yaw - goal.yaw)) <= yaw_tol)


class FootprintRaster:
    """Cell-coverage templates of the chair rectangle, pre-rasterized per yaw
    bin. Templates are padded so in-cell position and in-bin rotation can
    never expose an uncovered cell (conservative)."""

    def __init__(self, chair: ChairConfig, resolution: float, bins: int = 72):
        self.bins = bins
        self.resolution = resolution
        hl, hw = chair.length / 2.0, chair.width / 2.0
        reach = math.hypot(hl, hw)
        pad = resolution * math.sqrt(0.5) + reach * (math.pi / bins)
        hl += pad
        hw += pad
        self.span = int(math.ceil((reach + pad) / resolution)) + 1
        ax = np.arange(-self.span, self.span + 1, dtype=np.int32)
        gi, gj = np.meshgrid(ax, ax, indexing="ij")
        cx = gi.ravel() * resolution
        cy = gj.ravel() * resolution
        self.pad = 2 * self.span + 2
        self.templates = []
        for b in range(bins):
            yaw = 2.0 * math.pi * b / bins
            c, s = math.cos(yaw), math.sin(yaw)
            bx = c * cx + s * cy
            by = -s * cx + c * cy
            inside = (np.abs(bx) <= hl) & (np.abs(by) <= hw)
            self.templates.append((gi.ravel()[inside] + self.pad,
                                   gj.ravel()[inside] + self.pad))

    def bin_of(self, yaw: np.ndarray) -> np.ndarray:
        b = np.rint(np.asarray(yaw) / (2.0 * math.pi / self.bins)).astype(int)
        return b % self.bins

    def _pad_costs(self, cm: Costmap):
        pad = self.pad
        padded = np.zeros((cm.cells + 2 * pad, cm.cells + 2 * pad), dtype=np.uint8)
        padded[pad:pad + cm.cells, pad:pad + cm.cells] = cm.cost
        return padded

    def max_costs(self, cm: Costmap, x, y, yaw) -> np.ndarray:
        """Max cell cost under the padded footprint for each pose. Cells
        outside the window count as free."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        yaw = np.atleast_1d(np.asarray(yaw, dtype=float))
        padded = self._pad_costs(cm)
        ci = np.floor((x - cm.origin.x) / cm.resolution).astype(np.int32)
        cj = np.floor((y - cm.origin.y) / cm.resolution).astype(np.int32)
        out = np.zeros(x.size, dtype=np.int64)
        # poses whose padded footprint cannot touch the window cost nothing
        touch = ((ci >= -self.span) & (ci < cm.cells + self.span)
                 & (cj >= -self.span) & (cj < cm.cells + self.span))
        bins = self.bin_of(yaw)
        for b in np.unique(bins[touch]):
            sel = np.nonzero(touch & (bins == b))[0]
            ti, tj = self.templates[b]
            ii = ci[sel, None] + ti[None, :]
            jj = cj[sel, None] + tj[None, :]
            out[sel] = padded[ii, jj].max(axis=1)
        return out


class LocalPlanner:
    """Rollout-based velocity sampler for a differential-drive chair."""

    def __init__(self, chair: ChairConfig, dwa: DwaConfig, resolution: float):
        self.chair = chair
        self.dwa = dwa
        self.raster = FootprintRaster(chair, resolution)

    def compute_velocity(self, cm: Costmap, robot: Pose2D,
                         vel: VelocityCommand, subgoal: Pose2D) -> VelocityCommand:
        ch, dw = self.chair, self.dwa
        dt = ch.control_period
        v_axis = np.linspace(max(0.0, vel.v - ch.a_v * dt),
                             min(ch.v_max, vel.v + ch.a_v * dt), dw.v_samples)
        w_axis = np.linspace(max(-ch.w_max, vel.w - ch.a_w * dt),
                             min(ch.w_max, vel.w + ch.a_w * dt), dw.w_samples)
        v, w = [a.ravel() for a in np.meshgrid(v_axis, w_axis, indexing="ij")]

        steps = int(round(dw.horizon / dw.sim_dt))
        t = dw.sim_dt * np.arange(1, steps + 1)
        yaw = robot.yaw + w[:, None] * t[None, :]
        small = np.abs(w) < 1e-9
        wr = np.where(small, 1.0, w)
        x = np.where(small[:, None],
                     robot.x + v[:, None] * t[None, :] * np.cos(robot.yaw),
                     robot.x + (v / wr)[:, None] * (np.sin(yaw) - math.sin(robot.yaw)))
        y = np.where(small[:, None],
                     robot.y + v[:, None] * t[None, :] * np.sin(robot.yaw),
                     robot.y - (v / wr)[:, None] * (np.cos(yaw) - math.cos(robot.yaw)))

        fcost = self.raster.max_costs(cm, x.ravel(), y.ravel(), yaw.ravel())
        fcost = fcost.reshape(x.shape)
        traj_max = fcost.max(axis=1)
        valid = traj_max < LETHAL

        gd = np.hypot(x[:, -1] - subgoal.x, y[:, -1] - subgoal.y)
        bearing = np.arctan2(subgoal.y - y[:, -1], subgoal.x - x[:, -1])
        target = np.where(gd < 0.1, subgoal.yaw, bearing)
        herr = np.abs(wrap_angle(yaw[:, -1] - target))
        score = (dw.weight_goal * gd
                 + dw.weight_cost * traj_max / 255.0
                 + dw.weight_heading * herr)

        # prefer trajectories that keep the footprint out of the inscribed
        # band, unless reaching the subgoal itself requires entering it
        # (e.g. a doorway); then all collision-free rollouts compete
        goal_band = self.raster.max_costs(cm, subgoal.x, subgoal.y,
                                          subgoal.yaw)[0] >= INSCRIBED
        clean = valid & (traj_max < INSCRIBED)
        pool = clean if (clean.any() and not goal_band) else valid
        if pool.any():
            masked = np.where(pool, score, np.inf)
            k = int(np.argmin(masked))
            return VelocityCommand(float(v[k]), float(w[k]))

        here = self.raster.max_costs(cm, robot.x, robot.y, robot.yaw)
        if here[0] >= LETHAL:
            raise Trapped("rotate-in-place sweep intersects a lethal cell")
        bearing = math.atan2(subgoal.y - robot.y, subgoal.x - robot.x)
        sign = 1.0 if wrap_angle(bearing - robot.yaw) >= 0 else -1.0
        return VelocityCommand(0.0, sign * ch.w_max / 2.0)
