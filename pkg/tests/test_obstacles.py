import math

import numpy as np
import pytest

from chairnav.config import ScanConfig
from chairnav.geometry import PointCloud, Pose2D
from chairnav.obstacles import (cloud_to_scan, estimate_normals, euclidean_clusters,
                                project_obstacles, scan_bin_count, segment_ground)


def grid_plane(nx=30, ny=30, spacing=0.05, z=0.0):
    xs = np.arange(nx) * spacing
    ys = np.arange(ny) * spacing
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)])


class TestNormals:
    def test_flat_floor_normals_point_up(self):
        cloud = PointCloud(grid_plane())
        n = estimate_normals(cloud, 0.15)
        ang = np.degrees(np.arccos(np.clip(n[:, 2], -1, 1)))
        assert np.nanmax(ang) < 1.0

    def test_wall_normals_horizontal(self):
        pts = grid_plane()
        wall = np.column_stack([np.full(pts.shape[0], 2.0), pts[:, 0], pts[:, 1]])
        n = estimate_normals(PointCloud(wall), 0.15)
        assert np.nanmax(np.abs(n[:, 2])) < math.sin(math.radians(1.0))

    def test_sphere_normals_match_analytic_radial_oracle(self):
        rng = np.random.default_rng(21)
        # sample a sphere of radius 1 with small noise
        v = rng.normal(size=(4000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        pts = v * (1.0 + rng.normal(0, 0.002, size=(4000, 1)))
        center = np.array([0.0, 0.0, 0.0])
        n = estimate_normals(PointCloud(pts + center), 0.15,
                             view_origin=(0, 0, 0))
        ok = np.isfinite(n).all(axis=1)
        cosang = np.abs(np.einsum("ij,ij->i", n[ok], v[ok]))
        ang = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
        assert np.percentile(ang, 99) < 5.0

    def test_closed_form_matches_eigh_oracle(self):
        from chairnav.obstacles import _smallest_eigenvectors

        rng = np.random.default_rng(22)
        A = rng.normal(size=(500, 3, 3))
        C = A @ A.transpose(0, 2, 1)
        got = _smallest_eigenvectors(C)
        w, v = np.linalg.eigh(C)
        want = v[:, :, 0]
        dots = np.abs(np.einsum("ij,ij->i", got, want))
        assert dots.min() > 1 - 1e-6

    def test_isolated_points_get_no_normal(self):
        pts = np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0.0]])
        n = estimate_normals(PointCloud(pts), 0.15)
        assert np.isnan(n).all()


class TestSegmentGround:
    def test_flat_floor_is_ground(self):
        cloud = PointCloud(grid_plane())
        n = estimate_normals(cloud, 0.15)
        lab = segment_ground(cloud, n)
        assert len(lab.ground) == len(cloud)
        assert len(lab.obstacles) == 0

    def test_wall_is_obstacle(self):
        pts = grid_plane(40, 30)
        wall = np.column_stack([np.full(pts.shape[0], 2.0), pts[:, 0], pts[:, 1]])
        cloud = PointCloud(wall)
        n = estimate_normals(cloud, 0.15)
        lab = segment_ground(cloud, n)
        assert len(lab.obstacles) == len(cloud)

    def test_table_top_is_obstacle(self):
        table = grid_plane(16, 16, z=0.7)
        cloud = PointCloud(table)
        n = estimate_normals(cloud, 0.15)
        lab = segment_ground(cloud, n)
        assert len(lab.obstacles) == len(cloud)

    def test_partition_property(self):
        rng = np.random.default_rng(23)
        pts = np.vstack([grid_plane(), grid_plane(16, 16, z=0.7),
                         rng.uniform(-1, 1, size=(50, 3))])
        cloud = PointCloud(pts)
        n = estimate_normals(cloud, 0.15)
        lab = segment_ground(cloud, n)
        assert len(lab.ground) + len(lab.obstacles) == len(cloud)

    def test_threshold_monotonicity(self):
        # floor + wall + table scene: raising the angle threshold never
        # turns a ground point into an obstacle
        floor = grid_plane(40, 40)
        pts0 = grid_plane(30, 20)
        wall = np.column_stack([np.full(pts0.shape[0], 2.5), pts0[:, 0], pts0[:, 1]])
        table = grid_plane(12, 12, z=0.7) + np.array([0.5, 0.5, 0])
        cloud = PointCloud(np.vstack([floor, wall, table]))
        n = estimate_normals(cloud, 0.15)
        prev = None
        for deg in (10, 20, 30):
            lab = segment_ground(cloud, n, angle_threshold=math.radians(deg))
            if prev is not None:
                assert not np.any(prev & ~lab.ground_mask)
            prev = lab.ground_mask

    def test_noisy_scene_accuracy(self):
        rng = np.random.default_rng(24)
        floor = grid_plane(60, 60, spacing=0.05)
        pts0 = grid_plane(40, 32, spacing=0.05)
        wall = np.column_stack([np.full(pts0.shape[0], 3.2), pts0[:, 0], pts0[:, 1]])
        noise = rng.normal(0, 0.01, size=(len(floor) + len(wall), 3))
        pts = np.vstack([floor, wall]) + noise
        cloud = PointCloud(pts)
        n = estimate_normals(cloud, 0.15)
        lab = segment_ground(cloud, n)
        floor_ok = lab.ground_mask[:len(floor)].mean()
        wall_ok = (~lab.ground_mask[len(floor):]).mean()
        assert floor_ok >= 0.99
        assert wall_ok >= 0.99


class TestClustering:
    def test_two_groups_split_by_gap(self):
        a = grid_plane(10, 10)
        b = grid_plane(10, 10) + np.array([0.9, 0, 0])
        comps = euclidean_clusters(np.vstack([a, b]), 0.15)
        assert len(comps) == 2
        assert {len(c) for c in comps} == {100}

    def test_continuous_wall_single_cluster(self):
        comps = euclidean_clusters(grid_plane(30, 10), 0.15)
        assert len(comps) == 1

    def test_matches_union_find_oracle(self):
        rng = np.random.default_rng(25)
        for _ in range(20):
            pts = rng.uniform(0, 1.5, size=(rng.integers(5, 150), 3))
            tol = rng.uniform(0.08, 0.35)
            got = sorted(tuple(sorted(c.tolist()))
                         for c in euclidean_clusters(pts, tol))
            want = _brute_components(pts, tol)
            assert got == want


def _brute_components(pts, tolerance):
    n = len(pts)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    for i in range(n):
        for j in range(i + 1, n):
            if d2[i, j] <= tolerance * tolerance:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(tuple(sorted(g)) for g in groups.values())


class TestProjectObstacles:
    def test_empty(self):
        from chairnav.obstacles import LabeledCloud
        lab = LabeledCloud(PointCloud.empty(), PointCloud.empty(), np.zeros(0, bool))
        assert len(project_obstacles(lab)) == 0

    def test_single_point_flattens(self):
        from chairnav.obstacles import LabeledCloud
        lab = LabeledCloud(PointCloud.empty(),
                           PointCloud(np.array([[2.0, 1.0, 1.3]])),
                           np.array([False]))
        out = project_obstacles(lab)
        assert np.allclose(out.xyz, [[2.0, 1.0, 0.0]])

    def test_dedup_at_leaf_resolution(self):
        from chairnav.obstacles import LabeledCloud
        pts = np.array([[0.01, 0.01, 0.5], [0.02, 0.02, 1.0], [0.30, 0.30, 0.2]])
        lab = LabeledCloud(PointCloud.empty(), PointCloud(pts), np.zeros(3, bool))
        out = project_obstacles(lab, leaf=0.05)
        assert len(out) == 2
        assert np.all(out.z == 0)


class TestCloudToScan:
    def test_bin_count_invariant(self):
        cfg = ScanConfig()
        scan = cloud_to_scan(PointCloud.empty(), cfg)
        assert scan.ranges.size == scan_bin_count(cfg)
        assert scan.ranges.size == 141

    def test_single_point_center_bin(self):
        cfg = ScanConfig()
        scan = cloud_to_scan(PointCloud(np.array([[2.0, 0.0, 0.5]])), cfg)
        center = scan.ranges.size // 2
        assert scan.ranges[center] == pytest.approx(2.0)
        assert np.isinf(np.delete(scan.ranges, center)).all()

    def test_min_range_rule(self):
        cfg = ScanConfig()
        pts = np.array([[1.5, 0.0, 0.5], [2.5, 0.0, 0.5]])
        scan = cloud_to_scan(PointCloud(pts), cfg)
        assert scan.ranges[scan.ranges.size // 2] == pytest.approx(1.5)

    def test_z_band_filter(self):
        cfg = ScanConfig()
        pts = np.array([[2.0, 0.0, 0.01], [2.0, 0.0, 1.7]])
        scan = cloud_to_scan(PointCloud(pts), cfg)
        assert np.isinf(scan.ranges).all()

    def test_matches_brute_force_bin_oracle(self):
        rng = np.random.default_rng(26)
        cfg = ScanConfig()
        pts = rng.uniform(-3, 3, size=(4000, 3))
        pts[:, 2] = rng.uniform(0.1, 1.5, size=4000)
        scan = cloud_to_scan(PointCloud(pts), cfg)
        # oracle: per-point loop
        want = np.full(scan.ranges.size, np.inf)
        for x, y, z in pts:
            if not (cfg.z_min <= z <= cfg.z_max):
                continue
            r = math.hypot(x, y)
            if r > cfg.max_range:
                continue
            k = round((math.atan2(y, x) - cfg.angle_min) / cfg.angle_increment)
            if 0 <= k < want.size:
                want[k] = min(want[k], r)
        assert np.allclose(scan.ranges, want, equal_nan=True)

    def test_scan_never_reports_farther_than_truth(self):
        rng = np.random.default_rng(27)
        cfg = ScanConfig()
        pts = rng.uniform(-3, 3, size=(2000, 3))
        pts[:, 2] = 0.5
        scan = cloud_to_scan(PointCloud(pts), cfg)
        bearings = np.arctan2(pts[:, 1], pts[:, 0])
        ranges = np.hypot(pts[:, 0], pts[:, 1])
        for k in range(scan.ranges.size):
            if not np.isfinite(scan.ranges[k]):
                continue
            lo = cfg.angle_min + (k - 0.5) * cfg.angle_increment
            hi = cfg.angle_min + (k + 0.5) * cfg.angle_increment
            sel = (bearings >= lo) & (bearings <= hi) & (ranges <= cfg.max_range)
            assert scan.ranges[k] <= ranges[sel].min() + 1e-12
