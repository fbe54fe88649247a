import heapq

import numpy as np
import pytest

from locoman.errors import NoFeasibleGoal, NoPath
from locoman.geometry import Pose, vec3
from locoman.navgrid import (FREE, OCCUPIED, SQRT2, UNKNOWN, GoalSearchConfig,
                             OccupancyGrid, Scan, blocked_mask, bresenham,
                             disk_overlaps_bbox, find_goal_pose,
                             footprint_clear, path_cost, plan_path,
                             project_waypoint)


def dijkstra_cost(blocked, start, goal):
    """Independent oracle: uniform-cost search over the 8-connected grid."""
    h, w = blocked.shape
    if blocked[start[1], start[0]] or blocked[goal[1], goal[0]]:
        return None
    dist = {start: 0.0}
    heap = [(0.0, start)]
    moves = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
             (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]
    done = set()
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in done:
            continue
        if cur == goal:
            return d
        done.add(cur)
        for dx, dy, c in moves:
            nx, ny = cur[0] + dx, cur[1] + dy
            if not (0 <= nx < w and 0 <= ny < h) or blocked[ny, nx]:
                continue
            nd = d + c
            if nd < dist.get((nx, ny), np.inf):
                dist[(nx, ny)] = nd
                heapq.heappush(heap, (nd, (nx, ny)))
    return None


class TestGridBasics:
    def test_world_to_cell_floor_convention(self):
        g = OccupancyGrid(resolution=0.1, origin_xy=(0.0, 0.0))
        assert g.world_to_cell(0.0, 0.0) == (0, 0)
        assert g.world_to_cell(0.0999, 0.0) == (0, 0)
        assert g.world_to_cell(0.1, 0.0) == (1, 0)
        assert g.world_to_cell(-0.0001, 0.0) == (-1, 0)

    def test_cell_center_round_trip(self):
        g = OccupancyGrid(resolution=0.25, origin_xy=(-1.0, 2.0))
        c = g.cell_center(3, 5)
        assert g.world_to_cell(c[0], c[1]) == (3, 5)

    def test_starts_unknown(self):
        g = OccupancyGrid(width=8, height=8)
        assert np.all(g.cells == UNKNOWN)

    def test_growth_preserves_world_coordinates(self):
        g = OccupancyGrid(resolution=0.1, width=8, height=8, origin_xy=(0, 0))
        g.cells[2, 3] = OCCUPIED
        world = g.cell_center(3, 2)
        g.ensure_contains(-5.0, -5.0)
        cx, cy = g.world_to_cell(world[0], world[1])
        assert g.cells[cy, cx] == OCCUPIED
        assert g.width >= 8 and g.height >= 8

    def test_growth_doubles(self):
        g = OccupancyGrid(resolution=0.1, width=8, height=8, origin_xy=(0, 0))
        g.ensure_contains(0.85, 0.0)  # just past the right edge
        assert g.width == 16
        assert g.height == 8


class TestBresenham:
    def test_endpoints_inclusive(self):
        cells = bresenham(0, 0, 3, 0)
        assert cells[0] == (0, 0)
        assert cells[-1] == (3, 0)
        assert len(cells) == 4

    def test_diagonal(self):
        assert bresenham(0, 0, 3, 3) == [(0, 0), (1, 1), (2, 2), (3, 3)]

    def test_degenerate_single_cell(self):
        assert bresenham(2, 2, 2, 2) == [(2, 2)]

    def test_symmetric_cell_count(self):
        a = bresenham(0, 0, 7, 3)
        b = bresenham(7, 3, 0, 0)
        assert len(a) == len(b)


class TestScanIntegration:
    def _scan(self, points, sensor_xy=(0.0, 0.0)):
        pose = Pose(vec3(sensor_xy[0], sensor_xy[1], 0.3), np.array([1.0, 0, 0, 0]))
        return Scan(sensor_pose=pose, points=np.asarray(points, dtype=float))

    def test_endpoint_occupied_ray_free(self):
        g = OccupancyGrid(resolution=0.1, width=32, height=32, origin_xy=(-1.6, -1.6))
        g.integrate_scan(self._scan([[1.0, 0.0, 0.0]]))  # world z = 0.3, in band
        ex, ey = g.world_to_cell(1.0, 0.0)
        assert g.cells[ey, ex] == OCCUPIED
        sx, sy = g.world_to_cell(0.0, 0.0)
        assert g.cells[sy, sx] == FREE

    def test_occupied_never_reverts(self):
        g = OccupancyGrid(resolution=0.1, width=32, height=32, origin_xy=(-1.6, -1.6))
        g.integrate_scan(self._scan([[0.5, 0.0, 0.0]]))
        g.integrate_scan(self._scan([[1.0, 0.0, 0.0]]))  # ray passes the old endpoint
        cx, cy = g.world_to_cell(0.5, 0.0)
        assert g.cells[cy, cx] == OCCUPIED

    def test_z_band_filter(self):
        g = OccupancyGrid(resolution=0.1, width=32, height=32, origin_xy=(-1.6, -1.6))
        g.integrate_scan(self._scan([[1.0, 0.0, 0.5]]))   # world z = 0.8 > 0.6
        g.integrate_scan(self._scan([[1.0, 0.5, -0.28]]))  # world z = 0.02 < 0.05
        assert np.all(g.cells == UNKNOWN)

    def test_export_raster(self, tmp_path):
        g = OccupancyGrid(resolution=0.1, width=4, height=4, origin_xy=(0, 0))
        g.cells[0, 0] = FREE
        g.cells[1, 1] = OCCUPIED
        pgm = tmp_path / "map.pgm"
        hdr = tmp_path / "map.hdr"
        g.export_raster(pgm, hdr)
        raw = pgm.read_bytes()
        assert raw.startswith(b"P5\n4 4\n255\n")
        img = np.frombuffer(raw[len(b"P5\n4 4\n255\n"):], dtype=np.uint8).reshape(4, 4)
        assert img[0, 0] == 0
        assert img[1, 1] == 255
        assert img[2, 2] == 128
        text = hdr.read_text()
        assert "resolution 0.1" in text
        assert "width 4" in text


class TestAStar:
    def test_matches_dijkstra_on_random_grids(self):
        rng = np.random.Generator(np.random.PCG64(2024))
        solved = 0
        for _ in range(200):
            g = OccupancyGrid(resolution=0.1, width=20, height=20, origin_xy=(0, 0))
            g.cells[:] = FREE
            occ = rng.random((20, 20)) < 0.25
            g.cells[occ] = OCCUPIED
            free = np.argwhere(g.cells != OCCUPIED)
            start = tuple(free[rng.integers(len(free))][::-1])
            goal = tuple(free[rng.integers(len(free))][::-1])
            blocked = g.cells == OCCUPIED
            oracle = dijkstra_cost(blocked, start, goal)
            try:
                path = plan_path(g, start, goal)
            except NoPath:
                assert oracle is None
                continue
            assert oracle is not None
            # identical step multiset; tolerance only absorbs summation order
            assert path_cost(path) == pytest.approx(oracle, abs=1e-9)
            assert path[0] == start and path[-1] == goal
            for (x0, y0), (x1, y1) in zip(path, path[1:]):
                assert max(abs(x1 - x0), abs(y1 - y0)) == 1
                assert not blocked[y1, x1]
            solved += 1
        assert solved > 50  # the sweep must actually exercise the planner

    def test_deterministic_path(self):
        g = OccupancyGrid(resolution=0.1, width=20, height=20, origin_xy=(0, 0))
        g.cells[:] = FREE
        g.cells[5:15, 10] = OCCUPIED
        p1 = plan_path(g, (2, 2), (18, 18))
        p2 = plan_path(g, (2, 2), (18, 18))
        assert p1 == p2

    def test_inflation_blocks_narrow_gap(self):
        g = OccupancyGrid(resolution=0.1, width=20, height=20, origin_xy=(0, 0))
        g.cells[:] = FREE
        g.cells[10, :9] = OCCUPIED
        g.cells[10, 10:] = OCCUPIED  # one-cell gap at x=9
        path = plan_path(g, (9, 2), (9, 18))  # fits without inflation
        assert path[0] == (9, 2)
        with pytest.raises(NoPath):
            plan_path(g, (9, 2), (9, 18), inflation=0.15)

    def test_inflated_paths_keep_distance(self):
        g = OccupancyGrid(resolution=0.1, width=20, height=20, origin_xy=(0, 0))
        g.cells[:] = FREE
        g.cells[8:12, 8:12] = OCCUPIED
        inflation = 0.25
        path = plan_path(g, (1, 1), (18, 18), inflation=inflation)
        occ_centers = [g.cell_center(x, y) for y, x in np.argwhere(g.cells == OCCUPIED)]
        for cx, cy in path:
            c = g.cell_center(cx, cy)
            for oc in occ_centers:
                assert np.hypot(c[0] - oc[0], c[1] - oc[1]) > inflation

    def test_unknown_is_traversable(self):
        g = OccupancyGrid(resolution=0.1, width=10, height=10, origin_xy=(0, 0))
        path = plan_path(g, (0, 0), (9, 9))
        assert path_cost(path) == pytest.approx(9 * SQRT2)


class TestGoalSearch:
    def test_clear_waypoint_is_goal(self):
        g = OccupancyGrid(resolution=0.1, width=40, height=40, origin_xy=(-2, -2))
        g.cells[:] = FREE
        cfg = GoalSearchConfig()
        goal = find_goal_pose(g, np.array([0.5, 0.5, 0.0]), [], cfg,
                              np.array([2.0, 0.5]))
        assert np.allclose(goal.position[:2], [0.5, 0.5])

    def test_goal_faces_target(self):
        g = OccupancyGrid(resolution=0.1, width=40, height=40, origin_xy=(-2, -2))
        g.cells[:] = FREE
        goal = find_goal_pose(g, np.array([0.0, 0.0, 0.0]), [], GoalSearchConfig(),
                              np.array([1.0, 1.0]))
        assert goal.yaw() == pytest.approx(np.pi / 4, abs=1e-9)

    def test_steps_off_inflated_bbox(self):
        g = OccupancyGrid(resolution=0.1, width=60, height=60, origin_xy=(-3, -3))
        g.cells[:] = FREE
        cfg = GoalSearchConfig()
        bbox = (np.array([-0.2, -0.2, 0.0]), np.array([0.2, 0.2, 0.5]))
        goal = find_goal_pose(g, np.array([0.0, 0.0, 0.0]), [bbox], cfg,
                              np.array([0.0, 0.0]))
        x, y = goal.position[:2]
        assert not disk_overlaps_bbox(
            x, y, cfg.robot_inflation,
            bbox[0][:2] - cfg.bbox_inflation, bbox[1][:2] + cfg.bbox_inflation)
        # nearest admissible ring: outside the box but within the search radius
        assert np.hypot(x, y) <= cfg.search_radius + 1e-9

    def test_avoids_occupied_cells(self):
        g = OccupancyGrid(resolution=0.1, width=60, height=60, origin_xy=(-3, -3))
        g.cells[:] = FREE
        cx, cy = g.world_to_cell(0.0, 0.0)
        g.cells[cy - 2:cy + 3, cx - 2:cx + 3] = OCCUPIED
        cfg = GoalSearchConfig()
        goal = find_goal_pose(g, np.array([0.0, 0.0, 0.0]), [], cfg,
                              np.array([0.0, 0.0]))
        assert footprint_clear(g, goal.position[0], goal.position[1],
                               cfg.robot_inflation)

    def test_exhaustion_raises(self):
        g = OccupancyGrid(resolution=0.1, width=60, height=60, origin_xy=(-3, -3))
        g.cells[:] = OCCUPIED
        with pytest.raises(NoFeasibleGoal):
            find_goal_pose(g, np.array([0.0, 0.0, 0.0]), [], GoalSearchConfig(),
                           np.array([0.0, 0.0]))


class TestHelpers:
    def test_project_waypoint_grows_grid(self):
        g = OccupancyGrid(resolution=0.1, width=8, height=8, origin_xy=(0, 0))
        cx, cy = project_waypoint(g, np.array([-1.0, -1.0, 0.0]))
        assert g.in_bounds(cx, cy)
        assert np.allclose(g.cell_center(cx, cy), [-0.95, -0.95])

    def test_blocked_mask_inflation_radius(self):
        g = OccupancyGrid(resolution=0.1, width=20, height=20, origin_xy=(0, 0))
        g.cells[:] = FREE
        g.cells[10, 10] = OCCUPIED
        mask = blocked_mask(g, 0.2)
        assert mask[10, 10]
        assert mask[10, 12]  # 0.2 m away
        assert not mask[10, 13]  # 0.3 m away

    def test_disk_overlaps_bbox(self):
        assert disk_overlaps_bbox(0.0, 0.0, 0.5, (0.4, -1), (2, 1))
        assert not disk_overlaps_bbox(0.0, 0.0, 0.3, (0.4, -1), (2, 1))
        assert disk_overlaps_bbox(1.0, 0.0, 0.1, (0.4, -1), (2, 1))  # inside
