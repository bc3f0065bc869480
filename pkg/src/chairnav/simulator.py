"""Deterministic ground-truth world: ray-cast depth camera, differential
drive with command latency and caster disturbance, and waypoint agents.

World files are line-oriented UTF-8, `#` comments, SI units and radians:

    wall  X1 Y1 X2 Y2 HEIGHT
    box   CX CY YAW WIDTH DEPTH HEIGHT
    agent X Y SPEED  WX1 WY1 WX2 WY2 ...
    chair X Y YAW
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import CameraIntrinsics, ChairConfig, SimConfig
from .geometry import Pose2D, wrap_angle
from .navigation import VelocityCommand
from .sensor import DepthImage


class ParseError(ValueError):
    pass


class SemanticError(ValueError):
    pass


AGENT_RADIUS = 0.3


@dataclass
class Wall:
    p1: np.ndarray
    p2: np.ndarray
    height: float


@dataclass
class Box:
    cx: float
    cy: float
    yaw: float
    width: float
    depth: float
    height: float

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hx, hy = self.width / 2.0, self.depth / 2.0
        local = np.array([[hx, hy], [hx, -hy], [-hx, -hy], [-hx, hy]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])


@dataclass
class Agent:
    pos: np.ndarray
    speed: float
    waypoints: np.ndarray            # (K, 2) loop vertices
    radius: float = AGENT_RADIUS
    target: int = 0


@dataclass
class WorldModel:
    walls: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    agents: list = field(default_factory=list)
    chair_start: Pose2D = field(default_factory=Pose2D)


def load_world(text: str) -> WorldModel:
    world = WorldModel()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind, args = tok[0], tok[1:]
        try:
            vals = [float(a) for a in args]
        except ValueError as e:
            raise ParseError(f"line {ln}: bad number in {raw!r}") from e
        if kind == "wall":
            if len(vals) != 5:
                raise ParseError(f"line {ln}: wall needs X1 Y1 X2 Y2 HEIGHT")
            p1, p2 = np.array(vals[0:2]), np.array(vals[2:4])
            if np.allclose(p1, p2):
                raise SemanticError(f"line {ln}: zero-length wall")
            if vals[4] <= 0:
                raise SemanticError(f"line {ln}: wall height must be positive")
            world.walls.append(Wall(p1, p2, vals[4]))
        elif kind == "box":
            if len(vals) != 6:
                raise ParseError(f"line {ln}: box needs CX CY YAW WIDTH DEPTH HEIGHT")
            if min(vals[3], vals[4], vals[5]) <= 0:
                raise SemanticError(f"line {ln}: box dimensions must be positive")
            world.boxes.append(Box(*vals))
        elif kind == "agent":
            if len(vals) < 5 or len(vals[3:]) % 2:
                raise ParseError(f"line {ln}: agent needs X Y SPEED WX WY ...")
            if vals[2] < 0:
                raise SemanticError(f"line {ln}: agent speed must be >= 0")
            wp = np.array(vals[3:]).reshape(-1, 2)
            world.agents.append(Agent(np.array(vals[0:2]), vals[2], wp))
        elif kind == "chair":
            if len(vals) != 3:
                raise ParseError(f"line {ln}: chair needs X Y YAW")
            world.chair_start = Pose2D(*vals)
        else:
            raise ParseError(f"line {ln}: unknown entity {kind!r}")
    return world


def load_world_file(path) -> WorldModel:
    with open(path, encoding="utf-8") as f:
        return load_world(f.read())


# --- planar collision helpers -------------------------------------------

def _seg_seg_distance(a0, a1, b0, b1) -> float:
    """Distance between 2D segments; 0 when they intersect."""
    d1 = _cross2(a1 - a0, b0 - a0)
    d2 = _cross2(a1 - a0, b1 - a0)
    d3 = _cross2(b1 - b0, a0 - b0)
    d4 = _cross2(b1 - b0, a1 - b0)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return 0.0
    return min(_point_seg_distance(b0, a0, a1), _point_seg_distance(b1, a0, a1),
               _point_seg_distance(a0, b0, b1), _point_seg_distance(a1, b0, b1))


def _cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _point_seg_distance(p, s0, s1) -> float:
    d = s1 - s0
    L2 = float(d @ d)
    t = 0.0 if L2 == 0 else float(np.clip((p - s0) @ d / L2, 0.0, 1.0))
    return float(np.hypot(*(s0 + t * d - p)))


def chair_corners(pose: Pose2D, chair: ChairConfig) -> np.ndarray:
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    hl, hw = chair.length / 2.0, chair.width / 2.0
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([pose.x, pose.y])


def _poly_contains(poly: np.ndarray, p) -> bool:
    inside = True
    n = len(poly)
    sign = 0.0
    for i in range(n):
        cr = _cross2(poly[(i + 1) % n] - poly[i], np.asarray(p) - poly[i])
        if sign == 0.0:
            sign = cr
        elif cr * sign < 0:
            inside = False
            break
    return inside


def _poly_seg_distance(poly: np.ndarray, s0, s1) -> float:
    if _poly_contains(poly, s0) or _poly_contains(poly, s1):
        return 0.0
    n = len(poly)
    return min(_seg_seg_distance(poly[i], poly[(i + 1) % n], s0, s1)
               for i in range(n))


def _poly_poly_distance(a: np.ndarray, b: np.ndarray) -> float:
    if _poly_contains(a, b[0]) or _poly_contains(b, a[0]):
        return 0.0
    n = len(b)
    return min(_poly_seg_distance(a, b[i], b[(i + 1) % n]) for i in range(n))


def chair_clearance(pose: Pose2D, world: WorldModel, chair: ChairConfig) -> float:
    """Distance from the chair footprint to the nearest wall, box, or agent."""
    poly = chair_corners(pose, chair)
    best = math.inf
    for w in world.walls:
        best = min(best, _poly_seg_distance(poly, w.p1, w.p2))
    for b in world.boxes:
        best = min(best, _poly_poly_distance(poly, b.corners()))
    for a in world.agents:
        d = _poly_point_distance(poly, a.pos) - a.radius
        best = min(best, max(d, 0.0))
    return best


def _poly_point_distance(poly: np.ndarray, p) -> float:
    if _poly_contains(poly, p):
        return 0.0
    n = len(poly)
    return min(_point_seg_distance(np.asarray(p, dtype=float),
                                   poly[i], poly[(i + 1) % n]) for i in range(n))


def chair_collides(pose: Pose2D, world: WorldModel, chair: ChairConfig) -> bool:
    return chair_clearance(pose, world, chair) <= 0.0


# --- depth rendering ------------------------------------------------------

_RAY_CACHE: dict = {}


def _pixel_rays(k: CameraIntrinsics):
    key = (k.fx, k.fy, k.cx, k.cy, k.width, k.height)
    if key not in _RAY_CACHE:
        u = np.arange(k.width)
        v = np.arange(k.height)
        uu, vv = np.meshgrid(u, v)
        ry = (k.cx - uu).ravel() / k.fx
        rz = (k.cy - vv).ravel() / k.fy
        _RAY_CACHE[key] = (ry, rz)
    return _RAY_CACHE[key]


def render_depth(world: WorldModel, camera_pose: Pose2D, k: CameraIntrinsics,
                 sigma: float = 0.0, dropout: float = 0.0,
                 rng: np.random.Generator | None = None,
                 camera_height: float = 1.2,
                 agent_height: float = 1.7) -> DepthImage:
    """One ray per pixel; depth is the forward (x) distance to the nearest
    hit among walls, boxes, agent cylinders, and the ground plane. 0 marks
    no return."""
    ry, rz = _pixel_rays(k)
    c, s = math.cos(camera_pose.yaw), math.sin(camera_pose.yaw)
    ox, oy, oz = camera_pose.x, camera_pose.y, camera_height
    dx = c - s * ry
    dy = s + c * ry
    t = np.full(ry.size, np.inf)

    # ground plane z = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = np.where(rz < 0, -oz / rz, np.inf)
    t = np.minimum(t, np.where(tg > 1e-9, tg, np.inf))

    for w in world.walls:
        e = w.p2 - w.p1
        denom = dx * e[1] - dy * e[0]
        rel = w.p1 - np.array([ox, oy])
        with np.errstate(divide="ignore", invalid="ignore"):
            tw = (rel[0] * e[1] - rel[1] * e[0]) / denom
            sw = (rel[0] * dy - rel[1] * dx) / denom
        z = oz + tw * rz
        ok = (np.abs(denom) > 1e-12) & (tw > 1e-9) & (sw >= 0) & (sw <= 1) \
            & (z >= 0) & (z <= w.height)
        t = np.minimum(t, np.where(ok, tw, np.inf))

    for b in world.boxes:
        cb, sb = math.cos(b.yaw), math.sin(b.yaw)
        lox = cb * (ox - b.cx) + sb * (oy - b.cy)
        loy = -sb * (ox - b.cx) + cb * (oy - b.cy)
        ldx = cb * dx + sb * dy
        ldy = -sb * dx + cb * dy
        tb = _slab_enter(lox, loy, oz, ldx, ldy, rz,
                         b.width / 2.0, b.depth / 2.0, b.height)
        t = np.minimum(t, tb)

    for a in world.agents:
        qa = dx ** 2 + dy ** 2
        relx, rely = ox - a.pos[0], oy - a.pos[1]
        qb = 2.0 * (dx * relx + dy * rely)
        qc = relx ** 2 + rely ** 2 - a.radius ** 2
        disc = qb ** 2 - 4.0 * qa * qc
        with np.errstate(invalid="ignore"):
            root = (-qb - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * qa)
        z = oz + root * rz
        ok = (disc >= 0) & (root > 1e-9) & (z >= 0) & (z <= agent_height)
        t = np.minimum(t, np.where(ok, root, np.inf))

    depth = np.where(np.isfinite(t), t, 0.0)
    if rng is not None and (sigma > 0 or dropout > 0):
        valid = depth > 0
        if sigma > 0:
            depth = np.where(valid, depth + rng.normal(0.0, sigma, depth.size), depth)
        if dropout > 0:
            depth = np.where(valid & (rng.random(depth.size) < dropout), 0.0, depth)
    return DepthImage(depth.reshape(k.height, k.width).astype(np.float32), k)


def _slab_enter(ox, oy, oz, dx, dy, dz, hx, hy, hz):
    """Entering parameter of rays into the axis-aligned box
    [-hx, hx] x [-hy, hy] x [0, hz]; inf when missed."""
    tmin = np.full(dx.shape if hasattr(dx, "shape") else (1,), -np.inf)
    tmax = np.full_like(tmin, np.inf)
    for o, d, lo, hi in ((ox, dx, -hx, hx), (oy, dy, -hy, hy), (oz, dz, 0.0, hz)):
        o_arr = o if hasattr(o, "shape") else np.full_like(tmin, o)
        d_arr = d if hasattr(d, "shape") else np.full_like(tmin, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - o_arr) / d_arr
            t2 = (hi - o_arr) / d_arr
        near = np.minimum(t1, t2)
        far = np.maximum(t1, t2)
        par = np.abs(d_arr) < 1e-12
        inside = (o_arr >= lo) & (o_arr <= hi)
        near = np.where(par, np.where(inside, -np.inf, np.inf), near)
        far = np.where(par, np.where(inside, np.inf, -np.inf), far)
        tmin = np.maximum(tmin, near)
        tmax = np.minimum(tmax, far)
    hit = (tmin <= tmax) & (tmin > 1e-9)
    return np.where(hit, tmin, np.inf)


# --- stepping -------------------------------------------------------------

def step_agents(world: WorldModel, dt: float) -> None:
    """Advance each agent by exactly speed*dt of arc length along its loop."""
    for a in world.agents:
        remaining = a.speed * dt
        guard = 0
        while remaining > 1e-12 and guard < 4 * len(a.waypoints) + 8:
            guard += 1
            tgt = a.waypoints[a.target]
            vec = tgt - a.pos
            L = math.hypot(vec[0], vec[1])
            if L <= remaining:
                a.pos = tgt.astype(float).copy()
                a.target = (a.target + 1) % len(a.waypoints)
                remaining -= L
            else:
                a.pos = a.pos + vec * (remaining / L)
                remaining = 0.0


def unicycle_step(pose: Pose2D, cmd: VelocityCommand, dt: float) -> Pose2D:
    return Pose2D(pose.x + cmd.v * math.cos(pose.yaw) * dt,
                  pose.y + cmd.v * math.sin(pose.yaw) * dt,
                  pose.yaw + cmd.w * dt)


class Simulator:
    """Owns ground truth and exposes depth frames plus drifted odometry.

    Commands pass through a latency queue of ceil(latency/dt) control
    periods. Caster misalignment builds up during in-place rotation and
    bleeds into yaw as an exponentially decaying transient once the chair
    translates. Odometry integrates the applied commands (casters are
    unobserved) plus a per-meter yaw bias.
    """

    def __init__(self, world: WorldModel, intrinsics: CameraIntrinsics,
                 sim: SimConfig, chair: ChairConfig, seed: int = 0,
                 start: Pose2D | None = None):
        self.world = world
        self.k = intrinsics
        self.cfg = sim
        self.chair_cfg = chair
        self.seed = int(seed)
        self.pose = start if start is not None else world.chair_start
        self.odom = self.pose
        self.vel = VelocityCommand()
        self.caster_phi = 0.0
        self.collided = False
        self.time = 0.0
        self.frame = 0
        dt = chair.control_period
        delay = int(math.ceil(sim.latency / dt - 1e-9)) if sim.latency > 0 else 0
        self.queue = deque([VelocityCommand()] * delay)

    def render(self) -> DepthImage:
        rng = np.random.default_rng([self.seed, self.frame])
        img = render_depth(self.world, self.pose, self.k,
                           self.cfg.noise_sigma, self.cfg.dropout, rng,
                           agent_height=self.cfg.agent_height)
        self.frame += 1
        return img

    def step(self, cmd: VelocityCommand) -> None:
        dt = self.chair_cfg.control_period
        self.queue.append(cmd)
        applied = self.queue.popleft()
        if self.collided:
            applied = VelocityCommand()
        step_agents(self.world, dt)

        # caster disturbance: misalignment from in-place rotation bleeds
        # into heading while translating, decaying toward alignment; the
        # swivel geometry caps how far the casters can lag
        yaw_extra = 0.0
        if abs(applied.v) < 1e-9 and abs(applied.w) > 1e-9:
            self.caster_phi = float(np.clip(
                self.caster_phi + applied.w * dt, -0.5, 0.5))
        elif abs(applied.v) > 1e-9 and self.cfg.caster_gain > 0:
            yaw_extra = self.cfg.caster_gain * self.caster_phi * dt
            self.caster_phi *= math.exp(-dt / self.cfg.caster_tau)

        new_pose = unicycle_step(self.pose, applied, dt)
        if yaw_extra:
            new_pose = Pose2D(new_pose.x, new_pose.y, new_pose.yaw + yaw_extra)
        if not self.collided:
            if chair_collides(new_pose, self.world, self.chair_cfg):
                self.collided = True
                self.vel = VelocityCommand()
            else:
                self.pose = new_pose
                self.vel = applied
                drift = math.radians(self.cfg.drift_deg_per_m) * abs(applied.v) * dt
                od = unicycle_step(self.odom, applied, dt)
                self.odom = Pose2D(od.x, od.y, od.yaw + drift)
        self.time += dt

    def clearance(self) -> float:
        return chair_clearance(self.pose, self.world, self.chair_cfg)
