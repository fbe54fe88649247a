"""2D occupancy grid: scan integration, waypoint projection, goal search, A*.

Cells are Unknown until observed. Occupied wins every conflict and never
reverts to Free. The grid grows by doubling when points land outside.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import NoFeasibleGoal, NoPath
from .geometry import Pose, Pose as _Pose, vec3, quat_from_axis_angle

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

# export byte values for the graymap raster
_EXPORT_BYTE = {FREE: 0, UNKNOWN: 128, OCCUPIED: 255}

SQRT2 = float(np.sqrt(2.0))


@dataclass
class Scan:
    sensor_pose: Pose
    points: np.ndarray  # (N, 3) sensor frame
    timestamp: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class GoalSearchConfig:
    search_radius: float = 2.0
    ring_step: float = 0.1
    angular_step: float = np.pi / 16.0
    robot_inflation: float = 0.30
    bbox_inflation: float = 0.10

    def __post_init__(self):
        for name in ("search_radius", "ring_step", "angular_step",
                     "robot_inflation", "bbox_inflation"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


class OccupancyGrid:
    def __init__(self, resolution: float = 0.1, width: int = 64, height: int = 64,
                 origin_xy: tuple[float, float] = (0.0, 0.0)):
        if resolution <= 0.0:
            raise ValueError("resolution must be > 0")
        self.resolution = float(resolution)
        self.origin = np.array([origin_xy[0], origin_xy[1]], dtype=float)
        self.cells = np.full((height, width), UNKNOWN, dtype=np.uint8)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    # -- indexing ----------------------------------------------------------

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """Floor convention: boundary coordinates fall in the lower cell."""
        cx = int(np.floor((x - self.origin[0]) / self.resolution))
        cy = int(np.floor((y - self.origin[1]) / self.resolution))
        return cx, cy

    def cell_center(self, cx: int, cy: int) -> np.ndarray:
        return self.origin + (np.array([cx, cy], dtype=float) + 0.5) * self.resolution

    def in_bounds(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.width and 0 <= cy < self.height

    def get(self, cx: int, cy: int) -> int:
        if not self.in_bounds(cx, cy):
            return UNKNOWN
        return int(self.cells[cy, cx])

    # -- growth ------------------------------------------------------------

    def _grow_to_include(self, cx: int, cy: int) -> tuple[int, int]:
        """Double the grid toward the out-of-bounds cell; returns shifted index."""
        while not self.in_bounds(cx, cy):
            h, w = self.cells.shape
            grow_left = cx < 0
            grow_down = cy < 0
            new_w = w * 2 if (cx < 0 or cx >= w) else w
            new_h = h * 2 if (cy < 0 or cy >= h) else h
            off_x = w if grow_left else 0
            off_y = h if grow_down else 0
            new_cells = np.full((new_h, new_w), UNKNOWN, dtype=np.uint8)
            new_cells[off_y:off_y + h, off_x:off_x + w] = self.cells
            self.cells = new_cells
            self.origin = self.origin - np.array([off_x, off_y]) * self.resolution
            cx += off_x
            cy += off_y
        return cx, cy

    def ensure_contains(self, x: float, y: float) -> tuple[int, int]:
        cx, cy = self.world_to_cell(x, y)
        return self._grow_to_include(cx, cy)

    # -- scan integration --------------------------------------------------

    def integrate_scan(self, scan: Scan, z_band: tuple[float, float] = (0.05, 0.60)) -> None:
        """Mark endpoint cells Occupied and ray cells Free (occupied wins).

        Points outside the z band are dropped entirely (no free-space carving).
        """
        z_min, z_max = z_band
        sensor_xy = scan.sensor_pose.position[:2]
        s_cx, s_cy = self.ensure_contains(sensor_xy[0], sensor_xy[1])
        for p in scan.points:
            world = scan.sensor_pose.transform(p)
            if not (z_min <= world[2] <= z_max):
                continue
            e_cx, e_cy = self.ensure_contains(world[0], world[1])
            # grid may have grown: refresh sensor cell
            s_cx, s_cy = self.world_to_cell(sensor_xy[0], sensor_xy[1])
            for cx, cy in bresenham(s_cx, s_cy, e_cx, e_cy)[:-1]:
                if self.cells[cy, cx] != OCCUPIED:
                    self.cells[cy, cx] = FREE
            self.cells[e_cy, e_cx] = OCCUPIED

    # -- export ------------------------------------------------------------

    def export_raster(self, raster_path, header_path) -> None:
        """Binary graymap (P5): 0 = Free, 128 = Unknown, 255 = Occupied,
        plus a sidecar text header with resolution and origin."""
        img = np.full(self.cells.shape, _EXPORT_BYTE[UNKNOWN], dtype=np.uint8)
        img[self.cells == FREE] = _EXPORT_BYTE[FREE]
        img[self.cells == OCCUPIED] = _EXPORT_BYTE[OCCUPIED]
        with open(raster_path, "wb") as fh:
            fh.write(f"P5\n{self.width} {self.height}\n255\n".encode())
            fh.write(img.tobytes())
        with open(header_path, "w") as fh:
            fh.write(f"resolution {self.resolution!r}\n")
            fh.write(f"origin {self.origin[0]!r} {self.origin[1]!r}\n")
            fh.write(f"width {self.width}\nheight {self.height}\n")


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer ray-cast from (x0, y0) to (x1, y1), endpoints inclusive."""
    cells = []
    dx, dy = abs(x1 - x0), abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx - dy
    x, y = x0, y0
    while True:
        cells.append((x, y))
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
    return cells


def project_waypoint(grid: OccupancyGrid, target: np.ndarray) -> tuple[int, int]:
    """Cell containing the target's (x, y), growing the grid if needed."""
    return grid.ensure_contains(float(target[0]), float(target[1]))


# ---------------------------------------------------------------------------
# footprint / inflation helpers
# ---------------------------------------------------------------------------

def _disk_offsets(radius: float, resolution: float) -> np.ndarray:
    """Cell offsets whose center distance is within radius."""
    r_cells = int(np.floor(radius / resolution)) + 1
    offs = []
    for dy in range(-r_cells, r_cells + 1):
        for dx in range(-r_cells, r_cells + 1):
            if np.hypot(dx, dy) * resolution <= radius:
                offs.append((dx, dy))
    return np.array(offs, dtype=int)


def footprint_clear(grid: OccupancyGrid, x: float, y: float, radius: float) -> bool:
    """True when no Occupied cell center lies within radius of (x, y)."""
    cx, cy = grid.world_to_cell(x, y)
    r_cells = int(np.ceil(radius / grid.resolution)) + 1
    for dy in range(-r_cells, r_cells + 1):
        for dx in range(-r_cells, r_cells + 1):
            gx, gy = cx + dx, cy + dy
            if grid.get(gx, gy) == OCCUPIED:
                center = grid.cell_center(gx, gy)
                if np.hypot(center[0] - x, center[1] - y) <= radius:
                    return False
    return True


def point_in_inflated_bbox(x: float, y: float, bbox_min, bbox_max,
                           inflation: float) -> bool:
    return (bbox_min[0] - inflation <= x <= bbox_max[0] + inflation
            and bbox_min[1] - inflation <= y <= bbox_max[1] + inflation)


def disk_overlaps_bbox(x: float, y: float, radius: float, bbox_min, bbox_max) -> bool:
    """2D disk vs axis-aligned box overlap."""
    nx = min(max(x, bbox_min[0]), bbox_max[0])
    ny = min(max(y, bbox_min[1]), bbox_max[1])
    return np.hypot(nx - x, ny - y) < radius


def find_goal_pose(grid: OccupancyGrid, waypoint: np.ndarray, obstacles,
                   cfg: GoalSearchConfig, face_toward: np.ndarray) -> Pose:
    """First collision-free pose searching outward ring-by-ring from the waypoint.

    Rings at radii 0, ring_step, 2*ring_step, ... up to search_radius; each ring
    scanned from angle 0 by angular_step. The pose yaw faces face_toward.
    """
    wx, wy = float(waypoint[0]), float(waypoint[1])
    radius = 0.0
    while radius <= cfg.search_radius + 1e-12:
        if radius == 0.0:
            angles = [0.0]
        else:
            n = max(1, int(np.ceil(2.0 * np.pi / cfg.angular_step)))
            angles = [k * cfg.angular_step for k in range(n)
                      if k * cfg.angular_step < 2.0 * np.pi]
        for theta in angles:
            x = wx + radius * np.cos(theta)
            y = wy + radius * np.sin(theta)
            if not footprint_clear(grid, x, y, cfg.robot_inflation):
                continue
            blocked = False
            for bmin, bmax in obstacles:
                inflated_min = (bmin[0] - cfg.bbox_inflation, bmin[1] - cfg.bbox_inflation)
                inflated_max = (bmax[0] + cfg.bbox_inflation, bmax[1] + cfg.bbox_inflation)
                if disk_overlaps_bbox(x, y, cfg.robot_inflation, inflated_min, inflated_max):
                    blocked = True
                    break
            if blocked:
                continue
            yaw = float(np.arctan2(face_toward[1] - y, face_toward[0] - x))
            return _Pose(vec3(x, y, float(waypoint[2]) if len(waypoint) > 2 else 0.0),
                         quat_from_axis_angle(np.array([0, 0, 1.0]), yaw))
        radius += cfg.ring_step
    raise NoFeasibleGoal(
        f"no collision-free goal within {cfg.search_radius} m of ({wx:.2f}, {wy:.2f})")


def blocked_mask(grid: OccupancyGrid, inflation: float) -> np.ndarray:
    """Cells whose inflated footprint overlaps an Occupied cell."""
    occ = grid.cells == OCCUPIED
    if inflation <= 0.0:
        return occ
    mask = np.zeros_like(occ)
    offs = _disk_offsets(inflation, grid.resolution)
    ys, xs = np.nonzero(occ)
    h, w = occ.shape
    for dx, dy in offs:
        nx = xs + dx
        ny = ys + dy
        keep = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        mask[ny[keep], nx[keep]] = True
    return mask


def plan_path(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int],
              inflation: float = 0.0) -> list[tuple[int, int]]:
    """Cost-optimal 8-connected A* over Free|Unknown cells, diagonal cost sqrt(2).

    Tie-breaking is deterministic: (f, h, flat cell index).
    """
    h, w = grid.cells.shape
    sx, sy = start
    gx, gy = goal
    if not (grid.in_bounds(sx, sy) and grid.in_bounds(gx, gy)):
        raise NoPath("start or goal out of bounds")
    blocked = blocked_mask(grid, inflation)
    if blocked[sy, sx] or blocked[gy, gx]:
        raise NoPath("start or goal cell blocked")

    def heuristic(x, y):
        dx, dy = abs(x - gx), abs(y - gy)
        return (dx + dy) + (SQRT2 - 2.0) * min(dx, dy)

    g_score = {start: 0.0}
    came = {}
    h0 = heuristic(sx, sy)
    open_heap = [(h0, h0, sy * w + sx, start)]
    closed = set()
    moves = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
             (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]
    while open_heap:
        _, _, _, cur = heapq.heappop(open_heap)
        if cur in closed:
            continue
        if cur == goal:
            path = [cur]
            while path[-1] in came:
                path.append(came[path[-1]])
            return path[::-1]
        closed.add(cur)
        cx, cy = cur
        for dx, dy, cost in moves:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < w and 0 <= ny < h) or blocked[ny, nx]:
                continue
            tentative = g_score[cur] + cost
            nxt = (nx, ny)
            if tentative < g_score.get(nxt, np.inf):
                g_score[nxt] = tentative
                came[nxt] = cur
                hn = heuristic(nx, ny)
                heapq.heappush(open_heap, (tentative + hn, hn, ny * w + nx, nxt))
    raise NoPath(f"goal {goal} unreachable from {start}")


def path_cost(path: list[tuple[int, int]]) -> float:
    cost = 0.0
    for (x0, y0), (x1, y1) in zip(path, path[1:]):
        cost += SQRT2 if (x0 != x1 and y0 != y1) else 1.0
    return cost
