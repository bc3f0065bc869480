"""Scenario runner and benchmark harness.

Wires simulator -> sensor pipeline -> obstacle detection -> (mapper |
door pipeline) -> navigation in a 10 Hz loop, collects per-trial metrics,
and exports delimited results.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import doors as door_ops
from .config import StackConfig, default_intrinsics, full_res_intrinsics
from .costmap import INSCRIBED, Costmap, OutOfBounds
from .geometry import Pose2D, PointCloud, compose, invert, relative, wrap_angle
from .mapper import (GlobalGrid, OCCUPIED, UNKNOWN, PoseGraph,
                     assemble_global_grid, detect_loop_closure,
                     export_global_grid, load_session, localize,
                     optimize_graph, save_session)
from .navigation import (GoalInObstacle, LocalPlanner, NoPath, PlanningError,
                         StartInObstacle, Trapped, VelocityCommand, goal_reached,
                         plan_global, select_subgoal)
from .obstacles import cloud_to_scan, estimate_normals, project_obstacles, segment_ground
from .sensor import decimate, project_to_cloud, voxel_filter
from .simulator import Simulator, load_world_file
from .costmap import inflation_costs


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    path: str
    name: str
    world_path: str
    task: str
    seed: int = 0
    trials: int = 1
    noise_sigma: float = 0.01
    dropout: float = 0.002
    latency: float = 0.2
    caster_gain: float = 0.3
    drift_deg_per_m: float = 0.0
    goal: Pose2D | None = None
    map_dir: str | None = None
    script: list = field(default_factory=list)
    true_width: float | None = None
    door_center: np.ndarray | None = None
    door_axis: np.ndarray | None = None
    timeout: float = 60.0
    start_jitter_xy: float = 0.0
    start_jitter_yaw: float = 0.0
    start: Pose2D | None = None


_SCRIPT_PRIMS = {"forward": 1, "rotate": 1, "rotate360": 0, "pause": 1}


def parse_scenario(path) -> Scenario:
    base = os.path.dirname(os.path.abspath(path))
    name = os.path.splitext(os.path.basename(path))[0]
    sc = Scenario(path=str(path), name=name, world_path="", task="")
    with open(path, encoding="utf-8") as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            key, args = tok[0], tok[1:]
            try:
                if key == "world":
                    sc.world_path = os.path.join(base, args[0])
                elif key == "task":
                    if args[0] not in ("door_traverse", "navigate", "map"):
                        raise ScenarioError(f"line {ln}: unknown task {args[0]!r}")
                    sc.task = args[0]
                elif key == "seed":
                    sc.seed = int(args[0])
                elif key == "trials":
                    sc.trials = int(args[0])
                    if sc.trials < 1:
                        raise ScenarioError(f"line {ln}: trials must be >= 1")
                elif key == "noise_sigma":
                    sc.noise_sigma = float(args[0])
                elif key == "dropout":
                    sc.dropout = float(args[0])
                elif key == "latency":
                    sc.latency = float(args[0])
                elif key == "caster_gain":
                    sc.caster_gain = float(args[0])
                elif key == "drift_deg_per_m":
                    sc.drift_deg_per_m = float(args[0])
                elif key == "goal":
                    sc.goal = Pose2D(float(args[0]), float(args[1]), float(args[2]))
                elif key == "map":
                    sc.map_dir = os.path.join(base, args[0])
                elif key == "script":
                    prim = args[0]
                    if prim not in _SCRIPT_PRIMS:
                        raise ScenarioError(f"line {ln}: unknown primitive {prim!r}")
                    vals = [float(a) for a in args[1:]]
                    if len(vals) != _SCRIPT_PRIMS[prim]:
                        raise ScenarioError(f"line {ln}: bad arguments for {prim}")
                    sc.script.append((prim, *vals))
                elif key == "true_width":
                    sc.true_width = float(args[0])
                elif key == "door_center":
                    sc.door_center = np.array([float(args[0]), float(args[1])])
                elif key == "door_axis":
                    v = np.array([float(args[0]), float(args[1])])
                    sc.door_axis = v / np.linalg.norm(v)
                elif key == "timeout":
                    sc.timeout = float(args[0])
                elif key == "start_jitter_xy":
                    sc.start_jitter_xy = float(args[0])
                elif key == "start_jitter_yaw":
                    sc.start_jitter_yaw = float(args[0])
                elif key == "start":
                    sc.start = Pose2D(float(args[0]), float(args[1]), float(args[2]))
                else:
                    raise ScenarioError(f"line {ln}: unknown key {key!r}")
            except (IndexError, ValueError) as e:
                if isinstance(e, ScenarioError):
                    raise
                raise ScenarioError(f"line {ln}: cannot parse {raw.strip()!r}") from e
    if not sc.world_path or not sc.task:
        raise ScenarioError(f"{path}: scenario needs world and task")
    if not os.path.exists(sc.world_path):
        raise ScenarioError(f"{path}: world file {sc.world_path!r} missing")
    if sc.task == "navigate" and sc.goal is None:
        raise ScenarioError(f"{path}: navigate task needs a goal")
    if sc.task == "map" and not sc.script:
        raise ScenarioError(f"{path}: map task needs script lines")
    return sc


@dataclass
class RunMetrics:
    scenario: str
    trial: int
    success: bool
    detected_width: float | None
    true_width: float | None
    time_s: float
    path_length_m: float
    min_clearance_m: float
    reason: str = ""


@dataclass
class RunResult:
    metrics: RunMetrics
    trajectory: np.ndarray
    odom_trajectory: np.ndarray
    extras: dict = field(default_factory=dict)


def export_metrics(rows) -> str:
    """Fixed-header CSV, 6-decimal floats, empty fields for missing values."""
    out = ["scenario,trial,success,detected_width_m,true_width_m,"
           "time_s,path_length_m,min_clearance_m"]

    def num(v):
        return "" if v is None or not math.isfinite(v) else f"{v:.6f}"

    for m in rows:
        met = m.metrics if isinstance(m, RunResult) else m
        out.append(f"{met.scenario},{met.trial},{'true' if met.success else 'false'},"
                   f"{num(met.detected_width)},{num(met.true_width)},"
                   f"{num(met.time_s)},{num(met.path_length_m)},"
                   f"{num(met.min_clearance_m)}")
    return "\n".join(out) + "\n"


def export_grid(grid: GlobalGrid, pgm_path, meta_path=None) -> None:
    export_global_grid(grid, pgm_path, meta_path)


class Perception:
    """Per-frame front end: depth image to base-frame clouds, ground split,
    2D obstacle projection, and planar scan."""

    def __init__(self, cfg: StackConfig):
        self.cfg = cfg

    def process(self, img):
        p = self.cfg.pipeline
        cloud = project_to_cloud(img)
        base = PointCloud(cloud.xyz + np.array([0.0, 0.0, p.camera_height]), "base")
        vox = voxel_filter(base, p.voxel_leaf)
        if len(vox):
            normals = estimate_normals(vox, p.normal_radius,
                                       view_origin=(0.0, 0.0, p.camera_height),
                                       max_neighbors=p.normal_max_neighbors)
            labeled = segment_ground(vox, normals,
                                     math.radians(p.ground_angle_deg),
                                     p.ground_height, p.region_tolerance)
        else:
            from .obstacles import LabeledCloud
            labeled = LabeledCloud(PointCloud.empty("base"), PointCloud.empty("base"),
                                   np.zeros(0, dtype=bool))
        projected = project_obstacles(labeled, p.voxel_leaf)
        scan = cloud_to_scan(labeled.obstacles, self.cfg.scan)
        return base, labeled, projected, scan

    def door_cloud(self, base: PointCloud) -> PointCloud:
        """Obstacle cloud for detection episodes: the full-density cloud with
        floor returns cropped out (voxel reduction would bias the edges)."""
        keep = base.z >= self.cfg.door.gap_z[0]
        return PointCloud(base.xyz[keep], "base")


class _ScriptDriver:
    """Turns scenario script primitives into per-frame velocity commands,
    measuring progress with odometry."""

    V, W = 0.5, 0.6

    def __init__(self, script):
        self.todo = list(script)
        self.progress = 0.0
        self.prev = None

    def done(self) -> bool:
        return not self.todo

    def command(self, odom: Pose2D, dt: float) -> VelocityCommand:
        if not self.todo:
            return VelocityCommand()
        prim = self.todo[0]
        if self.prev is not None:
            self.progress += math.hypot(odom.x - self.prev.x, odom.y - self.prev.y) \
                if prim[0] == "forward" else abs(wrap_angle(odom.yaw - self.prev.yaw))
        self.prev = odom
        kind = prim[0]
        if kind == "pause":
            self.progress += dt
            target = prim[1]
        elif kind == "forward":
            target = prim[1]
        elif kind == "rotate":
            target = abs(prim[1])
        else:                                   # rotate360
            target = 2.0 * math.pi
        if self.progress >= target - 1e-9:
            self.todo.pop(0)
            self.progress = 0.0
            self.prev = odom
            return self.command(odom, dt)
        if kind == "forward":
            return VelocityCommand(self.V, 0.0)
        if kind == "rotate":
            return VelocityCommand(0.0, math.copysign(self.W, prim[1]))
        if kind == "rotate360":
            return VelocityCommand(0.0, self.W)
        return VelocityCommand()


class TrialRunner:
    """One deterministic trial of a scenario."""

    def __init__(self, scenario: Scenario, trial: int,
                 cfg: StackConfig | None = None, map_dir: str | None = None):
        self.sc = scenario
        self.trial = trial
        self.cfg = cfg or StackConfig()
        self.map_dir = map_dir or scenario.map_dir
        self.seed = scenario.seed + trial

        world = load_world_file(scenario.world_path)
        start = scenario.start if scenario.start is not None else world.chair_start
        if scenario.start_jitter_xy > 0 or scenario.start_jitter_yaw > 0:
            jr = np.random.default_rng([self.seed, 7])
            start = Pose2D(
                start.x + jr.uniform(-scenario.start_jitter_xy, scenario.start_jitter_xy),
                start.y + jr.uniform(-scenario.start_jitter_xy, scenario.start_jitter_xy),
                start.yaw + jr.uniform(-scenario.start_jitter_yaw, scenario.start_jitter_yaw))
        sim_cfg = replace(self.cfg.sim, noise_sigma=scenario.noise_sigma,
                          dropout=scenario.dropout, latency=scenario.latency,
                          caster_gain=scenario.caster_gain,
                          drift_deg_per_m=scenario.drift_deg_per_m)
        self.sim = Simulator(world, default_intrinsics(), sim_cfg,
                             self.cfg.chair, seed=self.seed, start=start)
        self.perception = Perception(self.cfg)
        self.local = LocalPlanner(self.cfg.chair, self.cfg.dwa,
                                  self.cfg.costmap.resolution)
        self.costmap = Costmap.centered(self.sim.odom, self.cfg.costmap)
        self.traj = [start.as_array()]
        self.odom_traj = [self.sim.odom.as_array()]
        self.min_clearance = self.sim.clearance()
        self.path_length = 0.0

    # -- shared loop pieces -------------------------------------------------

    def _advance(self, cmd: VelocityCommand) -> None:
        before = self.sim.pose
        self.sim.step(cmd)
        after = self.sim.pose
        self.path_length += math.hypot(after.x - before.x, after.y - before.y)
        self.min_clearance = min(self.min_clearance, self.sim.clearance())
        self.traj.append(after.as_array())
        self.odom_traj.append(self.sim.odom.as_array())

    def _metrics(self, success, width, reason="") -> RunMetrics:
        return RunMetrics(self.sc.name, self.trial, success, width,
                          self.sc.true_width, self.sim.time, self.path_length,
                          self.min_clearance, reason)

    def _predict_through_latency(self, belief: Pose2D):
        """Forward-simulate the commands still in flight so the local
        planner reasons about the pose they will act from."""
        from .simulator import unicycle_step

        pose = belief
        dt = self.cfg.chair.control_period
        pending = list(self.sim.queue)
        for cmd in pending:
            pose = unicycle_step(pose, cmd, dt)
        vel = pending[-1] if pending else self.sim.vel
        return pose, vel

    def _result(self, metrics, extras=None) -> RunResult:
        return RunResult(metrics, np.array(self.traj), np.array(self.odom_traj),
                         extras or {})

    def run(self) -> RunResult:
        if self.sc.task == "door_traverse":
            return self._run_door()
        if self.sc.task == "navigate":
            return self._run_navigate()
        if self.sc.task == "map":
            return self._run_map()
        raise ScenarioError(f"unknown task {self.sc.task!r}")

    # -- door traversal -----------------------------------------------------

    def _run_door(self) -> RunResult:
        dcfg = self.cfg.door
        width = None
        goals: list[Pose2D] = []
        gi = 0
        center_w = axis_w = None
        cutoff = None
        base_pose = None
        attempts = 0
        frame_idx = 0
        debug = []

        true_center = self.sc.door_center
        true_axis = self.sc.door_axis

        def true_progress() -> float:
            if true_center is None:
                if center_w is None:
                    return -math.inf
                p = self.sim.pose
                return float((np.array([p.x, p.y]) - center_w) @ axis_w)
            p = self.sim.pose
            return float((np.array([p.x, p.y]) - true_center) @ true_axis)

        def belief_progress(belief) -> float:
            return float((np.array([belief.x, belief.y]) - center_w) @ axis_w)

        def setup_from(det, belief):
            nonlocal goals, gi, center_w, axis_w, cutoff, base_pose
            goals = door_ops.plan_traversal_goals(det, belief, dcfg)
            c = (det.left_edge[:2] + det.right_edge[:2]) / 2.0
            cw = np.array([belief.x, belief.y]) + _rot(c, belief.yaw)
            aw = _rot(-det.approach_normal, belief.yaw)
            center_w, axis_w = cw, aw
            cutoff = abs(det.door_plane.d) + dcfg.advance_margin
            base_pose = belief
            gi = 0

        def goal_progress(g: Pose2D) -> float:
            return float((np.array([g.x, g.y]) - center_w) @ axis_w)

        def redetect(base: PointCloud, belief: Pose2D):
            """Refresh the detection on the advance-filtered cloud; a result
            inconsistent with the tracked door (different opening) is
            ignored, and goals already behind the chair are dropped."""
            nonlocal gi, attempts
            cloud = self.perception.door_cloud(base)
            traveled = max(0.0, (belief.x - base_pose.x) * math.cos(base_pose.yaw)
                           + (belief.y - base_pose.y) * math.sin(base_pose.yaw))
            filtered = door_ops.advance_filter(cloud, traveled, cutoff)
            attempts += 1
            try:
                det = door_ops.detect_door(filtered,
                                           seed=self.seed * 10000 + attempts,
                                           cfg=dcfg, log=debug)
            except door_ops.DoorPipelineError:
                return
            c = (det.left_edge[:2] + det.right_edge[:2]) / 2.0
            cw = np.array([belief.x, belief.y]) + _rot(c, belief.yaw)
            aw = _rot(-det.approach_normal, belief.yaw)
            if (np.hypot(*(cw - center_w)) > 0.4 or float(aw @ axis_w) < 0.8
                    or (width is not None and abs(det.width - width) > 0.2)):
                return
            setup_from(det, belief)
            prog = belief_progress(belief)
            while gi + 1 < len(goals) and goal_progress(goals[gi]) <= prog + 0.05:
                gi += 1

        search_rot = 1.0                # force an attempt on the first frame
        search_dir = 0.0                # latched sweep direction
        last_yaw = None
        blocked_frames = 0
        while self.sim.time < self.sc.timeout:
            img = self.sim.render()
            base, labeled, projected, scan = self.perception.process(img)
            belief = self.sim.odom
            self.costmap.recenter(belief)
            self.costmap.integrate_scan(scan, belief)
            cmd = VelocityCommand()

            if not goals:
                # search: sweep in place; attempt a detection every ~20 deg
                # of rotation so the doorway cannot slip between attempts
                if last_yaw is not None:
                    search_rot += abs(wrap_angle(belief.yaw - last_yaw))
                last_yaw = belief.yaw
                if search_rot >= 0.35:
                    search_rot = 0.0
                    cloud = self.perception.door_cloud(base)
                    attempts += 1
                    try:
                        det = door_ops.detect_door(
                            cloud, seed=self.seed * 10000 + attempts, cfg=dcfg,
                            log=debug)
                        if width is None:
                            width = det.width
                        setup_from(det, belief)
                        blocked_frames = 0
                    except door_ops.DoorPipelineError:
                        pass
                if not goals:
                    if search_dir == 0.0:
                        # latch the sweep direction toward the obstacle mass
                        pts = scan.points()
                        search_dir = 1.0
                        if len(pts) and np.arctan2(pts[:, 1], pts[:, 0]).mean() < 0:
                            search_dir = -1.0
                    cmd = VelocityCommand(0.0, search_dir * 0.4)
            else:
                prog = belief_progress(belief)
                goal = goals[gi]
                if (math.hypot(belief.x - goal.x, belief.y - goal.y) <= 0.25
                        or prog >= goal_progress(goal)):
                    if gi + 1 < len(goals):
                        gi += 1
                        if prog < -0.3:
                            redetect(base, belief)
                    # final goal reached without crossing: keep driving at it
                goal = self._feasible_goal(goals[min(gi, len(goals) - 1)], axis_w)
                if goal is None:
                    # the inflated band swallowed the goal: tolerate scan
                    # jitter briefly, then drop the detection and re-search
                    blocked_frames += 1
                    if blocked_frames >= 5:
                        goals = []
                        last_yaw = None
                        search_rot = 1.0
                        search_dir = 0.0
                        if debug is not None:
                            debug.append("goal blocked; restarting search")
                else:
                    blocked_frames = 0
                    pred, pvel = self._predict_through_latency(belief)
                    try:
                        cmd = self.local.compute_velocity(self.costmap, pred,
                                                          pvel, goal)
                    except Trapped:
                        cmd = VelocityCommand()

            if true_progress() >= 0.5:
                m = self._metrics(True, width)
                return self._result(m, {"debug": debug, "goals": goals})

            self._advance(cmd)
            if self.sim.collided:
                m = self._metrics(False, width, "collision")
                return self._result(m, {"debug": debug})
            frame_idx += 1

        reason = "timeout" if width is not None else "no_detection"
        return self._result(self._metrics(False, width, reason), {"debug": debug})

    def _feasible_goal(self, goal: Pose2D, axis_w) -> Pose2D | None:
        """Shift a goal sideways (along the door plane) when its cell is
        inside the inflated band; None when no nearby cell is usable."""
        try:
            c = self.costmap.query_cost(goal.x, goal.y)
        except OutOfBounds:
            return goal
        if c < INSCRIBED:
            return goal
        lat = np.array([-axis_w[1], axis_w[0]])
        for off in (0.05, -0.05, 0.10, -0.10, 0.15, -0.15):
            x, y = goal.x + off * lat[0], goal.y + off * lat[1]
            try:
                if self.costmap.query_cost(x, y) < INSCRIBED:
                    return Pose2D(x, y, goal.yaw)
            except OutOfBounds:
                continue
        return None

    # -- navigation ---------------------------------------------------------

    def _run_navigate(self) -> RunResult:
        if self.map_dir is None:
            return self._result(self._metrics(False, None, "no_map"))
        graph, grid = load_session(self.map_dir, self.cfg.mapper)
        cost = _global_cost(grid, self.cfg)
        goal = self.sc.goal
        correction = relative(self.sim.odom, self.sim.pose)  # identity-aligned start
        belief = compose(correction, self.sim.odom)
        try:
            path = plan_global(cost, grid.resolution, grid.origin, belief, goal)
        except PlanningError as e:
            return self._result(self._metrics(False, None, type(e).__name__))
        initial_path = path.waypoints.copy()
        frame_idx = 0
        replans = 0
        while self.sim.time < self.sc.timeout:
            img = self.sim.render()
            base, labeled, projected, scan = self.perception.process(img)
            belief = compose(correction, self.sim.odom)
            if frame_idx % 10 == 0 and frame_idx > 0:
                est, ok = localize(grid, scan, belief, self.cfg.mapper)
                if ok:
                    correction = compose(est, invert(self.sim.odom))
                    belief = est
            self.costmap.recenter(belief)
            self.costmap.integrate_scan(scan, belief)
            if goal_reached(belief, goal, self.cfg.dwa.goal_pos_tol,
                            self.cfg.dwa.goal_yaw_tol):
                m = self._metrics(True, None)
                return self._result(m, {"initial_path": initial_path})
            sub = select_subgoal(path, belief, self.cfg.dwa.subgoal_window)
            pred, pvel = self._predict_through_latency(belief)
            try:
                cmd = self.local.compute_velocity(self.costmap, pred, pvel, sub)
            except Trapped:
                replans += 1
                if replans > 3:
                    return self._result(self._metrics(False, None, "Trapped"),
                                        {"initial_path": initial_path})
                try:
                    path = plan_global(cost, grid.resolution, grid.origin,
                                       belief, goal)
                except PlanningError as e:
                    return self._result(self._metrics(False, None, type(e).__name__),
                                        {"initial_path": initial_path})
                cmd = VelocityCommand()
            self._advance(cmd)
            if self.sim.collided:
                return self._result(self._metrics(False, None, "collision"),
                                    {"initial_path": initial_path})
            frame_idx += 1
        return self._result(self._metrics(False, None, "timeout"),
                            {"initial_path": initial_path})

    # -- mapping ------------------------------------------------------------

    def _run_map(self) -> RunResult:
        cfg = self.cfg.mapper
        graph = PoseGraph(cfg)
        driver = _ScriptDriver(self.sc.script)
        node_truth = []
        last = None
        dt = self.cfg.chair.control_period
        closures = 0
        while not driver.done() and self.sim.time < self.sc.timeout:
            img = self.sim.render()
            base, labeled, projected, scan = self.perception.process(img)
            odom = self.sim.odom
            if last is None or _pose_gate(last, odom, cfg.node_translation,
                                          cfg.node_rotation):
                graph.add_node(odom, projected)
                node_truth.append(self.sim.pose.as_array())
                last = odom
                edge = detect_loop_closure(graph, graph.nodes[-1])
                if edge is not None:
                    graph.edges.append(edge)
                    optimize_graph(graph)
                    closures += 1
            cmd = driver.command(odom, dt)
            self._advance(cmd)
            if self.sim.collided:
                return self._result(self._metrics(False, None, "collision"),
                                    {"graph": graph})
        for _ in range(len(self.sim.queue) + 1):
            self._advance(VelocityCommand())
        converged = optimize_graph(graph)
        grid = assemble_global_grid(graph, cfg.grid_resolution)
        ok = driver.done() and not self.sim.collided
        m = self._metrics(ok, None, "" if ok else "timeout")
        return self._result(m, {"graph": graph, "grid": grid,
                                "node_truth": np.array(node_truth),
                                "closures": closures,
                                "optimizer_converged": converged})


def _rot(v, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _pose_gate(a: Pose2D, b: Pose2D, dxy: float, dyaw: float) -> bool:
    return (math.hypot(a.x - b.x, a.y - b.y) >= dxy
            or abs(wrap_angle(a.yaw - b.yaw)) >= dyaw)


def _global_cost(grid: GlobalGrid, cfg: StackConfig) -> np.ndarray:
    """Planning costs from a trinary global grid: occupied cells inflate,
    unknown cells are not traversable."""
    lethal = grid.data == OCCUPIED
    cost = inflation_costs(lethal, grid.resolution,
                           cfg.costmap.inflation_radius, cfg.costmap.decay_radius)
    unknown = grid.data == UNKNOWN
    cost[unknown & (cost < INSCRIBED)] = INSCRIBED
    return cost


def run_scenario(scenario: Scenario, cfg: StackConfig | None = None,
                 map_dir: str | None = None,
                 trials: int | None = None) -> list[RunResult]:
    """Run all trials sequentially with derived per-trial seeds."""
    cfg = cfg or StackConfig()
    n = trials if trials is not None else scenario.trials
    out = []
    for t in range(n):
        runner = TrialRunner(scenario, t, cfg, map_dir)
        out.append(runner.run())
    return out


def _bench_worker(args):
    path, trials = args
    sc = parse_scenario(path)
    results = run_scenario(sc, trials=trials)
    return [r.metrics for r in results]


@dataclass
class DoorSummary:
    door: str
    tests: int
    detection_rate: float
    traversal_rate: float
    width_mean: float | None
    width_std: float | None
    true_width: float | None


def door_benchmark(suite_dir, trials: int | None = None, jobs: int = 1):
    """Run every scenario in a suite directory (both sides of each door).

    Returns (metrics rows in suite order, per-door summaries + total row).
    """
    paths = sorted(
        os.path.join(suite_dir, f) for f in os.listdir(suite_dir)
        if f.endswith(".scn"))
    if not paths:
        raise ScenarioError(f"no scenario files in {suite_dir}")
    work = [(p, trials) for p in paths]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            batches = list(ex.map(_bench_worker, work))
    else:
        batches = [_bench_worker(w) for w in work]

    rows = [m for batch in batches for m in batch]
    groups: dict[str, list[RunMetrics]] = {}
    for path, batch in zip(paths, batches):
        sc_name = os.path.splitext(os.path.basename(path))[0]
        door = sc_name.rsplit("_", 1)[0] if sc_name.rsplit("_", 1)[-1] in ("west", "east") \
            else sc_name
        groups.setdefault(door, []).extend(batch)

    summaries = []
    for door in sorted(groups):
        ms = groups[door]
        widths = np.array([m.detected_width for m in ms
                           if m.detected_width is not None])
        summaries.append(DoorSummary(
            door, len(ms),
            sum(m.detected_width is not None for m in ms) / len(ms),
            sum(m.success for m in ms) / len(ms),
            float(widths.mean()) if len(widths) else None,
            float(widths.std(ddof=1)) if len(widths) > 1 else None,
            ms[0].true_width))
    total = [m for g in groups.values() for m in g]
    widths = np.array([m.detected_width for m in total if m.detected_width is not None])
    summaries.append(DoorSummary(
        "ALL", len(total),
        sum(m.detected_width is not None for m in total) / len(total),
        sum(m.success for m in total) / len(total),
        float(widths.mean()) if len(widths) else None,
        float(widths.std(ddof=1)) if len(widths) > 1 else None, None))
    return rows, summaries


def export_door_summary(summaries) -> str:
    out = ["door,tests,detection_rate,traversal_rate,width_mean_m,width_std_m,true_width_m"]

    def num(v):
        return "" if v is None else f"{v:.6f}"

    for s in summaries:
        out.append(f"{s.door},{s.tests},{s.detection_rate:.6f},"
                   f"{s.traversal_rate:.6f},{num(s.width_mean)},"
                   f"{num(s.width_std)},{num(s.true_width)}")
    return "\n".join(out) + "\n"


def pipeline_bench(frames: int = 10) -> dict:
    """Point-count checks at both resolutions plus stage timings."""
    import tempfile

    from . import worlds
    from .simulator import load_world, render_depth

    world = load_world("\n".join(worlds.fixture_room_lines()))
    full = render_depth(world, world.chair_start, full_res_intrinsics())
    cloud_full = project_to_cloud(full)
    deci = decimate(full, 4)
    cloud_deci = project_to_cloud(deci)

    cfg = StackConfig()
    perception = Perception(cfg)
    k = default_intrinsics()
    timings = {"render": 0.0, "perception": 0.0}
    rng = np.random.default_rng(0)
    for i in range(frames):
        t0 = time.perf_counter()
        img = render_depth(world, world.chair_start, k, cfg.sim.noise_sigma,
                           cfg.sim.dropout, np.random.default_rng([0, i]))
        t1 = time.perf_counter()
        perception.process(img)
        t2 = time.perf_counter()
        timings["render"] += t1 - t0
        timings["perception"] += t2 - t1
    return {
        "full_res_points": len(cloud_full),
        "decimated_points": len(cloud_deci),
        "decimated_max": deci.width * deci.height,
        "render_ms": 1000.0 * timings["render"] / frames,
        "perception_ms": 1000.0 * timings["perception"] / frames,
    }
