import math

import numpy as np
import pytest

from chairnav.config import DoorConfig
from chairnav.doors import (Blocked, DegenerateOverlap, DoorCandidate,
                            InsufficientPoints, NearParallel, NotFound,
                            WallCluster, WidthOutOfRange, advance_filter,
                            cluster_wall, detect_door, detect_double_plane,
                            detect_single_plane, extract_wall_plane,
                            midsection_filter, pair_candidates,
                            plan_traversal_goals, validate_door)
from chairnav.geometry import Plane, PointCloud, Pose2D, compose, transform_cloud

CFG = DoorConfig()


def wall_points(y_lo, y_hi, x=2.0, z_lo=0.0, z_hi=2.1, spacing=0.01,
                rng=None, sigma=0.0):
    """Dense samples of a wall plane x = const spanning [y_lo, y_hi]."""
    ys = np.arange(y_lo, y_hi + spacing / 2, spacing)
    zs = np.arange(z_lo, z_hi + spacing / 2, spacing)
    gy, gz = np.meshgrid(ys, zs)
    pts = np.column_stack([np.full(gy.size, float(x)), gy.ravel(), gz.ravel()])
    if sigma and rng is not None:
        pts[:, 0] += rng.normal(0, sigma, len(pts))
    return pts


def oblique_wall(p0, p1, z_hi=2.1, spacing=0.01):
    """Vertical wall between two ground points."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    L = np.linalg.norm(p1 - p0)
    ts = np.arange(0, 1 + spacing / (2 * L), spacing / L)
    zs = np.arange(0.0, z_hi + spacing / 2, spacing)
    gt, gz = np.meshgrid(ts, zs)
    xy = p0 + gt.ravel()[:, None] * (p1 - p0)
    return np.column_stack([xy, gz.ravel()])


def door_scene(width=0.89, x=2.0, ext=3.0, spacing=0.012):
    """Single-plane doorway: one wall with a centered gap."""
    left = wall_points(width / 2, ext, x=x, spacing=spacing)
    right = wall_points(-ext, -width / 2, x=x, spacing=spacing)
    return PointCloud(np.vstack([left, right]), "base")


class TestExtractWallPlane:
    def test_wall_beats_floor(self):
        rng = np.random.default_rng(50)
        wall = wall_points(-1, 1, x=2.0, spacing=0.03)
        floor = np.column_stack([rng.uniform(0, 3, 5000),
                                 rng.uniform(-2, 2, 5000),
                                 np.zeros(5000)])
        cloud = PointCloud(np.vstack([wall, floor]))
        plane, inliers, rest = extract_wall_plane(cloud, np.random.default_rng(1), CFG)
        assert abs(plane.normal[2]) <= CFG.vertical_tolerance
        assert abs(abs(plane.normal[0]) - 1) < 0.01

    def test_larger_wall_first(self):
        big = wall_points(-2, 2, x=2.0, spacing=0.02)
        small = wall_points(-0.5, 0.5, x=3.0, spacing=0.02)
        cloud = PointCloud(np.vstack([big, small]))
        plane, inliers, rest = extract_wall_plane(cloud, np.random.default_rng(2), CFG)
        d0 = abs(2.0 * plane.normal[0] + plane.d)
        assert d0 < 0.02
        assert len(inliers) > len(big) * 0.95

    def test_matches_total_least_squares_oracle(self):
        wall = wall_points(-1.5, 1.5, x=2.2, spacing=0.02)
        cloud = PointCloud(wall)
        plane, inliers, _ = extract_wall_plane(cloud, np.random.default_rng(3), CFG)
        # oracle: eigen decomposition plane fit on the same points
        c = wall.mean(axis=0)
        cov = (wall - c).T @ (wall - c)
        evals, evecs = np.linalg.eigh(cov)
        n = evecs[:, 0]
        cosang = abs(float(n @ plane.normal))
        assert math.degrees(math.acos(min(1, cosang))) < 1.0
        assert abs(abs(plane.d) - 2.2) < 0.01

    def test_insufficient_points(self):
        with pytest.raises(InsufficientPoints):
            extract_wall_plane(PointCloud(np.zeros((10, 3))),
                               np.random.default_rng(0), CFG)

    def test_deterministic_given_seed(self):
        cloud = door_scene()
        a = extract_wall_plane(cloud, np.random.default_rng(7), CFG)
        b = extract_wall_plane(cloud, np.random.default_rng(7), CFG)
        assert np.array_equal(a[0].normal, b[0].normal)
        assert len(a[1]) == len(b[1])


class TestMidsection:
    def test_band_retained(self):
        wall = wall_points(-1, 1, spacing=0.05)
        out = midsection_filter(PointCloud(wall), 0.8, 1.4)
        assert len(out) > 0
        assert out.z.min() >= 0.8 and out.z.max() <= 1.4

    def test_empty_when_below(self):
        wall = wall_points(-1, 1, z_hi=0.5, spacing=0.05)
        assert len(midsection_filter(PointCloud(wall), 0.8, 1.4)) == 0

    def test_retention_matches_binomial_expectation(self):
        rng = np.random.default_rng(51)
        n = 20000
        pts = np.column_stack([np.full(n, 2.0), rng.uniform(-1, 1, n),
                               rng.uniform(0.0, 2.2, n)])
        out = midsection_filter(PointCloud(pts), 0.8, 1.4)
        frac = 0.6 / 2.2
        sigma = math.sqrt(n * frac * (1 - frac))
        assert abs(len(out) - n * frac) < 3 * sigma


class TestClusterAndPair:
    def test_gap_splits_clusters(self):
        cloud = midsection_filter(door_scene(), 0.8, 1.4)
        plane = Plane(np.array([1.0, 0, 0]), -2.0)
        clusters = cluster_wall(cloud, plane, CFG.cluster_tolerance,
                                CFG.cluster_min_size)
        assert len(clusters) == 2

    def test_continuous_wall_one_cluster(self):
        cloud = midsection_filter(PointCloud(wall_points(-2, 2)), 0.8, 1.4)
        plane = Plane(np.array([1.0, 0, 0]), -2.0)
        assert len(cluster_wall(cloud, plane, CFG.cluster_tolerance,
                                CFG.cluster_min_size)) == 1

    def test_pairing_counts_and_tested_memory(self):
        plane = Plane(np.array([1.0, 0, 0]), -2.0)
        pts = PointCloud(wall_points(0, 0.3, spacing=0.05))
        cl = [WallCluster(pts, plane, (0, 0.3)) for _ in range(4)]
        tested = {(0, 1)}
        cands = pair_candidates(cl, tested)
        assert len(cands) == 5            # C(4,2) - 1
        assert len(tested) == 6
        assert pair_candidates(cl, tested) == []

    def test_geometry_routing(self):
        p_wall = Plane(np.array([1.0, 0, 0]), -2.0)
        p_leaf = Plane(np.array([0.0, 1.0, 0]), -0.445)
        pts = PointCloud(wall_points(0, 0.3, spacing=0.05))
        tested = set()
        cands = pair_candidates(
            [WallCluster(pts, p_wall, (0, 1)), WallCluster(pts, p_wall, (2, 3)),
             WallCluster(pts, p_leaf, (0, 1))], tested)
        kinds = {(c.left.plane is c.right.plane or True, c.geometry) for c in cands}
        geoms = sorted(c.geometry for c in cands)
        assert geoms == ["double_plane", "double_plane", "single_plane"]


class TestSinglePlane:
    def build_candidate(self, width=0.89, x=2.0, yaw=0.0):
        scene = door_scene(width, x=x)
        if yaw:
            scene = transform_cloud(scene, Pose2D(0, 0, yaw), frame="base")
        cfg = CFG
        plane, inliers, _ = extract_wall_plane(scene, np.random.default_rng(4), cfg)
        mid = midsection_filter(inliers, *cfg.midsection_z)
        clusters = cluster_wall(mid, plane, cfg.cluster_tolerance,
                                cfg.cluster_min_size)
        assert len(clusters) == 2
        return DoorCandidate(clusters[0], clusters[1], "single_plane"), scene

    def test_edges_straight_on(self):
        cand, _ = self.build_candidate()
        left, right = detect_single_plane(cand)
        assert left[2] == 0 and right[2] == 0
        assert abs(left[1] - 0.445) < 0.03
        assert abs(right[1] + 0.445) < 0.03
        assert abs(left[0] - 2.0) < 0.03 and abs(right[0] - 2.0) < 0.03

    def test_equivariant_under_chair_yaw(self):
        cand, _ = self.build_candidate(yaw=math.radians(20))
        left, right = detect_single_plane(cand)
        # oracle: rotate the true edges by the same rigid motion
        c, s = math.cos(math.radians(20)), math.sin(math.radians(20))
        want_left = np.array([c * 2.0 - s * 0.445, s * 2.0 + c * 0.445, 0])
        want_right = np.array([c * 2.0 + s * 0.445, s * 2.0 - c * 0.445, 0])
        assert np.linalg.norm(left - want_left) < 0.03
        assert np.linalg.norm(right - want_right) < 0.03

    def test_overlap_rejected(self):
        plane = Plane(np.array([1.0, 0, 0]), -2.0)
        a = PointCloud(wall_points(-0.5, 0.5, spacing=0.04, z_lo=0.8, z_hi=1.4))
        b = PointCloud(wall_points(0.0, 1.0, spacing=0.04, z_lo=0.8, z_hi=1.4))
        ca = WallCluster(a, plane, (-0.5, 0.5))
        cb = WallCluster(b, plane, (0.0, 1.0))
        with pytest.raises(DegenerateOverlap):
            detect_single_plane(DoorCandidate(ca, cb, "single_plane"))


class TestDoublePlane:
    def build(self, width=0.89, open_deg=90.0, x=2.0):
        """Frame wall with a hinged leaf at the left edge, opened toward
        the sensor."""
        th = math.radians(open_deg)
        hinge = np.array([x, width / 2])
        tip = hinge + width * np.array([-math.sin(th), -math.cos(th)])
        wall = np.vstack([wall_points(width / 2, 3.0, x=x),
                          wall_points(-3.0, -width / 2, x=x)])
        leaf = oblique_wall(hinge, tip)
        cfg = CFG
        p_wall = Plane(np.array([1.0, 0, 0]), -x)
        leaf_dir = tip - hinge
        n_leaf = np.array([-leaf_dir[1], leaf_dir[0], 0.0])
        p_leaf = Plane(n_leaf, -float(n_leaf[:2] @ hinge))
        mid_wall = midsection_filter(PointCloud(wall), *cfg.midsection_z)
        mid_leaf = midsection_filter(PointCloud(leaf), *cfg.midsection_z)
        cl_wall = cluster_wall(mid_wall, p_wall, cfg.cluster_tolerance,
                               cfg.cluster_min_size)
        cl_leaf = cluster_wall(mid_leaf, p_leaf, cfg.cluster_tolerance,
                               cfg.cluster_min_size)
        # wall side bounding the gap is the one below the hinge
        right_wall = [c for c in cl_wall if c.span[1] <= 0.1][0]
        full = PointCloud(np.vstack([wall, leaf]))
        return DoorCandidate(cl_leaf[0], right_wall, "double_plane"), full

    def test_hinged_leaf_edges(self):
        cand, _ = self.build()
        left, right = detect_double_plane(cand)
        width = np.hypot(*(left[:2] - right[:2]))
        assert abs(width - 0.89) < 0.05
        assert np.linalg.norm(left[:2] - [2.0, 0.445]) < 0.03
        assert np.linalg.norm(right[:2] - [2.0, -0.445]) < 0.03

    def test_exact_corner_is_edge(self):
        cand, _ = self.build(open_deg=90.0)
        left, right = detect_double_plane(cand)
        # noiseless: the hinge-side edge sits at the plane intersection
        assert np.linalg.norm(left[:2] - [2.0, 0.445]) < 1e-6 + 0.011

    def test_near_parallel_rejected(self):
        plane_a = Plane(np.array([1.0, 0, 0]), -2.0)
        plane_b = Plane(np.array([math.cos(math.radians(2)),
                                  math.sin(math.radians(2)), 0]), -2.0)
        pts = PointCloud(wall_points(0, 0.5, spacing=0.05))
        with pytest.raises(NearParallel):
            detect_double_plane(DoorCandidate(
                WallCluster(pts, plane_a, (0, 1)),
                WallCluster(pts, plane_b, (0, 1)), "double_plane"))


class TestValidate:
    def test_valid_door(self):
        scene = door_scene()
        det = validate_door((np.array([2.0, 0.445, 0]), np.array([2.0, -0.445, 0])),
                            scene, CFG)
        assert det.width == pytest.approx(0.89, abs=1e-9)
        # approach normal points back toward the sensor at the origin
        assert det.approach_normal[0] < 0

    def test_blocked_by_leaf_points(self):
        scene = door_scene()
        closed = wall_points(-0.42, 0.42, x=2.0, spacing=0.03)
        cloud = PointCloud(np.vstack([scene.xyz, closed]))
        with pytest.raises(Blocked):
            validate_door((np.array([2.0, 0.445, 0]),
                           np.array([2.0, -0.445, 0])), cloud, CFG)

    def test_width_bounds(self):
        scene = door_scene()
        with pytest.raises(WidthOutOfRange):
            validate_door((np.array([2.0, 0.15, 0]), np.array([2.0, -0.15, 0])),
                          scene, CFG)
        with pytest.raises(WidthOutOfRange):
            validate_door((np.array([2.0, 1.5, 0]), np.array([2.0, -1.5, 0])),
                          scene, CFG)

    def test_stray_threshold_boundary(self):
        scene = door_scene()
        rng = np.random.default_rng(52)
        stray = np.column_stack([np.full(CFG.stray_threshold, 2.0),
                                 rng.uniform(-0.3, 0.3, CFG.stray_threshold),
                                 rng.uniform(0.3, 1.2, CFG.stray_threshold)])
        cloud = PointCloud(np.vstack([scene.xyz, stray]))
        with pytest.raises(Blocked):
            validate_door((np.array([2.0, 0.445, 0]),
                           np.array([2.0, -0.445, 0])), cloud, CFG)


class TestDetectDoor:
    def test_clean_single_plane_scene(self):
        scene = door_scene()
        det = detect_door(scene, seed=1)
        assert det.width == pytest.approx(0.89, abs=0.02)

    def test_empty_room_not_found(self):
        rng = np.random.default_rng(53)
        floor = np.column_stack([rng.uniform(0, 3, 2000),
                                 rng.uniform(-2, 2, 2000),
                                 rng.uniform(0, 0.04, 2000)])
        with pytest.raises(NotFound):
            detect_door(PointCloud(floor), seed=1)

    def test_bookshelf_wall_rejected_then_door_found(self):
        # large shelf face in front of the door wall: more prominent, no
        # valid gap; the driver must remove it and find the real door
        shelf = wall_points(-1.6, 1.6, x=1.2, z_hi=1.9, spacing=0.01)
        scene = door_scene(x=2.4, spacing=0.012)
        cloud = PointCloud(np.vstack([shelf, scene.xyz]))
        log = []
        det = detect_door(cloud, seed=2, log=log)
        assert det.width == pytest.approx(0.89, abs=0.03)
        assert abs(abs(det.door_plane.d) - 2.4) < 0.05
        assert any("wall" in line for line in log)

    def test_termination_bound(self):
        # pathological cloud of many small vertical planes: the driver must
        # stop within ceil(n / min_inliers) wall removals
        rng = np.random.default_rng(54)
        pieces = [wall_points(-0.1, 0.12, x=1.0 + 0.3 * k, z_lo=0.8, z_hi=1.4,
                              spacing=0.02)
                  for k in range(8)]
        cloud = PointCloud(np.vstack(pieces))
        with pytest.raises(NotFound):
            detect_door(cloud, seed=3)

    def test_equivariance_under_rigid_motion(self):
        scene = door_scene()
        det0 = detect_door(scene, seed=4)
        pose = Pose2D(0.3, -0.2, math.radians(15))
        moved = transform_cloud(scene, pose, frame="base")
        det1 = detect_door(moved, seed=4)
        c, s = math.cos(pose.yaw), math.sin(pose.yaw)
        R = np.array([[c, -s], [s, c]])
        for e0, e1 in ((det0.left_edge, det1.left_edge),
                       (det0.right_edge, det1.right_edge)):
            want = R @ e0[:2] + np.array([pose.x, pose.y])
            assert np.linalg.norm(e1[:2] - want) < 0.03

    def test_coat_rack_immunity(self):
        # free-standing narrow object 0.5 m in front of the wall
        rack = oblique_wall([1.5, -0.8], [1.5, -0.4], z_hi=1.2, spacing=0.02)
        scene = door_scene(x=2.0)
        cloud = PointCloud(np.vstack([scene.xyz, rack]))
        det_clean = detect_door(scene, seed=5)
        det_rack = detect_door(cloud, seed=5)
        assert abs(det_rack.width - det_clean.width) < 0.03
        assert np.linalg.norm(det_rack.left_edge - det_clean.left_edge) < 0.03


class TestWidthStatistics:
    def test_noiseless_synthetic_scenes(self):
        rng = np.random.default_rng(55)
        errors = []
        for k in range(50):
            width = float(rng.uniform(0.8, 1.6))
            x = float(rng.uniform(1.5, 3.0))
            scene = door_scene(width, x=x, spacing=0.01)
            det = detect_door(scene, seed=100 + k)
            errors.append(det.width - width)
        errors = np.array(errors)
        assert np.abs(errors).max() <= 0.02

    def test_noisy_width_statistics(self):
        rng = np.random.default_rng(56)
        errors = []
        for k in range(30):
            scene = door_scene(0.89, x=2.0, spacing=0.012)
            noisy = scene.xyz.copy()
            noisy[:, 0] += rng.normal(0, 0.01, len(noisy))
            det = detect_door(PointCloud(noisy), seed=200 + k)
            errors.append(det.width - 0.89)
        errors = np.array(errors)
        assert abs(errors.mean()) <= 0.02
        assert errors.std(ddof=1) <= 0.05


class TestTraversalGoals:
    def det(self, dist=3.0):
        return validate_door((np.array([dist, 0.445, 0]),
                              np.array([dist, -0.445, 0])),
                             door_scene(x=dist), CFG)

    def test_far_start_six_goals(self):
        goals = plan_traversal_goals(self.det(3.0), Pose2D())
        assert len(goals) == 6
        xs = [g.x for g in goals]
        assert xs == pytest.approx([1.0, 1.5, 2.0, 2.5, 3.0, 3.8], abs=1e-9)

    def test_near_start_fewer_goals(self):
        goals = plan_traversal_goals(self.det(1.0), Pose2D())
        xs = [g.x for g in goals]
        assert xs == pytest.approx([0.3, 0.8, 1.0, 1.8], abs=1e-9)

    def test_goal_headings_along_axis(self):
        goals = plan_traversal_goals(self.det(2.0), Pose2D())
        for g in goals:
            assert g.yaw == pytest.approx(0.0, abs=1e-9)

    def test_goals_collinear_on_axis(self):
        det = self.det(2.5)
        chair = Pose2D(0.4, -0.3, 0.2)
        goals = plan_traversal_goals(det, chair)
        # all goals on the line through the world-frame center along the axis
        c, s = math.cos(chair.yaw), math.sin(chair.yaw)
        center = np.array([chair.x + c * 2.5, chair.y + s * 2.5])
        axis = np.array([c, s])
        for g in goals:
            off = np.array([g.x, g.y]) - center
            cross = off[0] * axis[1] - off[1] * axis[0]
            assert abs(cross) < 1e-9


class TestAdvanceFilter:
    def test_zero_travel_cutoff_only(self):
        cloud = PointCloud(np.array([[1.0, 0, 1], [2.4, 0, 1], [3.0, 0, 1]]))
        out = advance_filter(cloud, 0.0, 2.5)
        assert len(out) == 2

    def test_travel_shifts_cutoff(self):
        cloud = PointCloud(np.array([[1.0, 0, 1], [2.1, 0, 1], [2.4, 0, 1]]))
        out = advance_filter(cloud, 0.5, 2.5)
        assert len(out) == 1
        assert out.xyz[0, 0] == 1.0

    def test_never_selects_wall_past_the_door(self):
        # door wall at 2.0, cross wall at 3.0; as the chair "advances" the
        # filtered cloud must keep detecting the near wall only
        scene = door_scene(x=2.0)
        cross = wall_points(-3, 3, x=3.0, spacing=0.015)
        cutoff = 2.0 + 0.5
        for traveled in (0.0, 0.4, 0.8, 1.2):
            shifted = np.vstack([scene.xyz, cross])
            shifted = shifted - np.array([traveled, 0, 0])
            cloud = advance_filter(PointCloud(shifted), traveled, cutoff)
            if len(cloud) < CFG.min_points:
                continue
            try:
                det = detect_door(cloud, seed=6)
            except NotFound:
                continue
            assert abs(det.door_plane.d) + traveled < 2.6
