"""Default tunables for the whole stack, grouped per subsystem.

Every number that is not forced by geometry lives here so scenarios and
tests can override it in one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    min_range: float = 0.5
    max_range: float = 4.5

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.min_range < self.max_range):
            raise ValueError("need 0 < min_range < max_range")

    @staticmethod
    def from_fov(width: int, height: int, hfov_deg: float, vfov_deg: float,
                 min_range: float = 0.5, max_range: float = 4.5) -> "CameraIntrinsics":
        fx = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        fy = (height / 2.0) / math.tan(math.radians(vfov_deg) / 2.0)
        return CameraIntrinsics(fx, fy, (width - 1) / 2.0, (height - 1) / 2.0,
                                width, height, min_range, max_range)


# Kinect-2-like simulated sensor: resolution matches the decimated stream,
# FOV and range are recorded design values.
def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics.from_fov(256, 212, 70.0, 60.0)


def full_res_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics.from_fov(512, 424, 70.0, 60.0)


@dataclass(frozen=True)
class PipelineConfig:
    """Cloud reduction and ground segmentation."""

    voxel_leaf: float = 0.05
    normal_radius: float = 0.15          # 3 voxel leaves
    normal_max_neighbors: int = 16
    ground_angle_deg: float = 20.0
    ground_height: float = 0.10
    region_tolerance: float = 0.10       # 2 voxel leaves, for surface grouping
    camera_height: float = 1.2


@dataclass(frozen=True)
class ScanConfig:
    angle_min: float = math.radians(-35.0)
    angle_max: float = math.radians(35.0)
    angle_increment: float = math.radians(0.5)
    z_min: float = 0.05
    z_max: float = 1.6
    max_range: float = 4.5


@dataclass(frozen=True)
class ChairConfig:
    width: float = 0.62
    length: float = 1.00
    v_max: float = 0.8
    w_max: float = 1.0
    a_v: float = 0.5
    a_w: float = 1.0
    control_period: float = 0.1


@dataclass(frozen=True)
class CostmapConfig:
    resolution: float = 0.05
    size: float = 4.0                    # rolling window edge length, meters
    inflation_radius: float = 0.40
    decay_radius: float = 0.80
    max_range: float = 4.5               # clearing distance for no-return beams


@dataclass(frozen=True)
class DwaConfig:
    horizon: float = 1.2
    sim_dt: float = 0.1
    v_samples: int = 11
    w_samples: int = 21
    weight_goal: float = 0.6
    weight_cost: float = 0.08
    weight_heading: float = 0.1
    subgoal_window: float = 1.8
    goal_pos_tol: float = 0.10
    goal_yaw_tol: float = 0.15


@dataclass(frozen=True)
class DoorConfig:
    ransac_iterations: int = 400
    inlier_threshold: float = 0.03
    vertical_tolerance: float = 0.15     # max |n_z| for a wall plane
    min_inliers: int = 150
    min_points: int = 300
    midsection_z: tuple = (0.8, 1.4)
    cluster_tolerance: float = 0.15
    cluster_min_size: int = 50
    parallel_tolerance_deg: float = 10.0
    width_min: float = 0.72              # chair width + 2 x 5 cm clearance
    width_max: float = 1.8               # covers double doors, rejects deep
                                         # diagonal openings between walls
    stray_threshold: int = 15
    gap_inset: float = 0.05
    gap_half_depth: float = 0.15
    gap_z: tuple = (0.05, 1.6)
    goal_spacing: float = 0.5
    goal_post: float = 0.8
    goal_standoff_max: float = 2.0
    goal_standoff_margin: float = 0.3
    advance_margin: float = 0.5


@dataclass(frozen=True)
class MapperConfig:
    node_translation: float = 0.3
    node_rotation: float = math.radians(15.0)
    icp_max_iterations: int = 40
    icp_corr_dist: float = 0.5
    icp_inlier_dist: float = 0.10
    icp_min_inlier_frac: float = 0.6
    icp_max_residual: float = 0.05
    icp_min_points: int = 5
    loop_gate_radius: float = 1.0
    loop_exclude_last: int = 10
    info_odom: tuple = (50.0, 50.0, 100.0)
    info_refined: tuple = (400.0, 400.0, 800.0)
    grid_resolution: float = 0.05
    optimizer_max_iterations: int = 100
    optimizer_grad_tol: float = 1e-8


@dataclass(frozen=True)
class SimConfig:
    latency: float = 0.2
    caster_gain: float = 0.3
    caster_tau: float = 0.5
    noise_sigma: float = 0.01
    dropout: float = 0.002
    drift_deg_per_m: float = 0.0
    agent_height: float = 1.7


@dataclass(frozen=True)
class StackConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    chair: ChairConfig = field(default_factory=ChairConfig)
    costmap: CostmapConfig = field(default_factory=CostmapConfig)
    dwa: DwaConfig = field(default_factory=DwaConfig)
    door: DoorConfig = field(default_factory=DoorConfig)
    mapper: MapperConfig = field(default_factory=MapperConfig)
    sim: SimConfig = field(default_factory=SimConfig)
