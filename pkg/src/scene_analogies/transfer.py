"""Trajectory transfer through a scene map.

Short trajectories are mapped point by point.  Long trajectories are
resampled into arc-length waypoints, each waypoint is mapped, and the mapped
waypoints are reconnected with collision-free grid paths so the result stays
out of reference-scene geometry.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .parallel import worker_count
from .scene_model import SceneBundle, _frozen
from .tps_map import SceneMap

SNAP_RADIUS = 0.5

# 26-connected neighborhood, sorted lexicographically so expansion order is
# stable across runs.
_STEPS: tuple[tuple[int, int, int], ...] = tuple(
    (dx, dy, dz)
    for dx in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dz in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
)

_SQRT2 = math.sqrt(2.0)
_SQRT3 = math.sqrt(3.0)


class TrajectoryFormatError(ValueError):
    """Raised when a trajectory document is malformed."""


class NoPathError(RuntimeError):
    """Raised when the grid search cannot connect two points."""


@dataclass(frozen=True)
class Trajectory:
    frame_id: str
    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise TrajectoryFormatError("trajectory points must have shape (n, 3)")
        if not np.all(np.isfinite(pts)):
            raise TrajectoryFormatError("trajectory points must be finite")
        object.__setattr__(self, "points", _frozen(pts))


def load_trajectory(path: str) -> Trajectory:
    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    if not isinstance(doc, dict) or "frame_id" not in doc or "points" not in doc:
        raise TrajectoryFormatError("trajectory document needs frame_id and points")
    return Trajectory(frame_id=str(doc["frame_id"]), points=np.asarray(doc["points"]))


def save_trajectory(trajectory: Trajectory, path: str) -> None:
    doc = {
        "frame_id": trajectory.frame_id,
        "points": [[float(v) for v in p] for p in trajectory.points],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, sort_keys=True, indent=2)
        handle.write("\n")


def transfer_short(trajectory: Trajectory, scene_map: SceneMap) -> Trajectory:
    """Map each trajectory point independently through the spline."""
    return Trajectory(
        frame_id=trajectory.frame_id,
        points=scene_map.spline.apply_many(trajectory.points),
    )


@dataclass(frozen=True)
class OccupancyGrid:
    origin: np.ndarray
    resolution: float
    occupied: np.ndarray

    def __post_init__(self) -> None:
        origin = _frozen(np.asarray(self.origin, dtype=np.float64).reshape(3))
        occ = np.asarray(self.occupied, dtype=bool)
        if occ.ndim != 3:
            raise ValueError("occupancy volume must be 3-dimensional")
        occ = occ.copy()
        occ.setflags(write=False)
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "occupied", occ)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.occupied.shape  # type: ignore[return-value]

    def cell_of(self, point: np.ndarray) -> tuple[int, int, int]:
        idx = np.floor((np.asarray(point, dtype=np.float64) - self.origin) / self.resolution)
        return tuple(int(v) for v in idx)

    def center_of(self, cell: tuple[int, int, int]) -> np.ndarray:
        return self.origin + (np.asarray(cell, dtype=np.float64) + 0.5) * self.resolution

    def in_bounds(self, cell: tuple[int, int, int]) -> bool:
        return all(0 <= c < n for c, n in zip(cell, self.shape))

    def is_free(self, cell: tuple[int, int, int]) -> bool:
        return self.in_bounds(cell) and not bool(self.occupied[cell])


def build_occupancy(
    scene: SceneBundle | np.ndarray,
    resolution: float = 0.05,
    inflation: float = 0.15,
    margin: float = 0.5,
) -> OccupancyGrid:
    """Rasterize scene points into a boolean volume.

    A cell is occupied when it contains a point or when its center lies
    within `inflation` of any point.  `margin` pads the bounding box so paths
    can route around the outside of the geometry.
    """
    points = scene.all_points() if isinstance(scene, SceneBundle) else np.asarray(scene)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.size == 0:
        raise ValueError("cannot build a grid from an empty point set")
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    if inflation < 0 or margin < 0:
        raise ValueError("inflation and margin must be non-negative")
    origin = points.min(axis=0) - margin
    extent = points.max(axis=0) + margin - origin
    shape = tuple(max(1, int(math.ceil(e / resolution))) for e in extent)
    occupied = np.zeros(shape, dtype=bool)

    idx = np.floor((points - origin) / resolution).astype(np.int64)
    idx = np.clip(idx, 0, np.asarray(shape) - 1)
    occupied[idx[:, 0], idx[:, 1], idx[:, 2]] = True

    if inflation > 0:
        tree = cKDTree(points)
        centers_axis = [
            origin[d] + (np.arange(shape[d], dtype=np.float64) + 0.5) * resolution
            for d in range(3)
        ]
        grid = np.meshgrid(*centers_axis, indexing="ij")
        centers = np.stack([g.ravel() for g in grid], axis=1)
        block = 1_000_000
        near = np.zeros(centers.shape[0], dtype=bool)
        for start in range(0, centers.shape[0], block):
            chunk = centers[start : start + block]
            dists, _ = tree.query(chunk, k=1, workers=worker_count())
            near[start : start + chunk.shape[0]] = dists <= inflation
        occupied |= near.reshape(shape)

    return OccupancyGrid(origin=origin, resolution=resolution, occupied=occupied)


def _snap_to_free(
    grid: OccupancyGrid, point: np.ndarray, radius: float
) -> tuple[int, int, int]:
    cell = grid.cell_of(point)
    if grid.is_free(cell):
        return cell
    reach = int(math.ceil(radius / grid.resolution)) + 1
    best: tuple[float, tuple[int, int, int]] | None = None
    for dx in range(-reach, reach + 1):
        for dy in range(-reach, reach + 1):
            for dz in range(-reach, reach + 1):
                cand = (cell[0] + dx, cell[1] + dy, cell[2] + dz)
                if not grid.is_free(cand):
                    continue
                dist = float(np.linalg.norm(grid.center_of(cand) - point))
                if dist > radius:
                    continue
                # Lexicographic cell order settles distance ties.
                if best is None or (dist, cand) < best:
                    best = (dist, cand)
    if best is None:
        raise NoPathError(
            f"no free cell within {radius} of point {np.asarray(point).tolist()}"
        )
    return best[1]


def path_cost(cells: list[tuple[int, int, int]], resolution: float) -> float:
    """Canonical cost of a cell path: per-step-type counts times exact step
    lengths.  Any two paths with the same step histogram get bit-identical
    costs regardless of step order."""
    counts = [0, 0, 0]
    for a, b in zip(cells, cells[1:]):
        kind = abs(b[0] - a[0]) + abs(b[1] - a[1]) + abs(b[2] - a[2])
        counts[kind - 1] += 1
    return resolution * (counts[0] + counts[1] * _SQRT2 + counts[2] * _SQRT3)


def astar(
    grid: OccupancyGrid,
    start: np.ndarray,
    goal: np.ndarray,
    snap_radius: float = SNAP_RADIUS,
) -> tuple[np.ndarray, float]:
    """Shortest 26-connected path between two points.

    Start and goal snap to the nearest free cell within `snap_radius` when
    their own cells are blocked or out of bounds.  Returns the polyline
    (exact start, traversed cell centers, exact goal) and the path cost in
    world units.
    """
    start = np.asarray(start, dtype=np.float64).reshape(3)
    goal = np.asarray(goal, dtype=np.float64).reshape(3)
    start_cell = _snap_to_free(grid, start, snap_radius)
    goal_cell = _snap_to_free(grid, goal, snap_radius)
    res = grid.resolution
    step_cost = {1: res, 2: res * _SQRT2, 3: res * _SQRT3}
    goal_center = grid.center_of(goal_cell)

    def heuristic(cell: tuple[int, int, int]) -> float:
        return float(np.linalg.norm(grid.center_of(cell) - goal_center))

    g_score: dict[tuple[int, int, int], float] = {start_cell: 0.0}
    came_from: dict[tuple[int, int, int], tuple[int, int, int]] = {}
    open_heap: list[tuple[float, tuple[int, int, int]]] = [
        (heuristic(start_cell), start_cell)
    ]
    closed: set[tuple[int, int, int]] = set()

    while open_heap:
        _, cell = heapq.heappop(open_heap)
        if cell in closed:
            continue
        if cell == goal_cell:
            break
        closed.add(cell)
        g_here = g_score[cell]
        for dx, dy, dz in _STEPS:
            nbr = (cell[0] + dx, cell[1] + dy, cell[2] + dz)
            if nbr in closed or not grid.is_free(nbr):
                continue
            g_new = g_here + step_cost[abs(dx) + abs(dy) + abs(dz)]
            if g_new < g_score.get(nbr, math.inf):
                g_score[nbr] = g_new
                came_from[nbr] = cell
                heapq.heappush(open_heap, (g_new + heuristic(nbr), nbr))
    else:
        raise NoPathError("start and goal are not connected in the grid")

    cells = [goal_cell]
    while cells[-1] != start_cell:
        cells.append(came_from[cells[-1]])
    cells.reverse()

    centers = np.stack([grid.center_of(c) for c in cells], axis=0)
    polyline = np.concatenate([start[None, :], centers, goal[None, :]], axis=0)
    return polyline, path_cost(cells, res)


def sample_waypoints(points: np.ndarray, stride: float = 1.0) -> np.ndarray:
    """Resample a polyline at fixed arc-length intervals.

    The first and last points are always kept; interior samples sit at
    multiples of `stride` along the cumulative length.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if stride <= 0:
        raise ValueError("stride must be positive")
    if points.shape[0] == 1:
        return points.copy()
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(arc[-1])
    if total == 0.0:
        return points[[0, -1]].copy()
    targets = np.arange(0.0, total, stride)
    if total - targets[-1] < 1e-12:
        targets = targets[:-1]
    targets = np.concatenate([targets, [total]])
    out = np.stack([np.interp(targets, arc, points[:, d]) for d in range(3)], axis=1)
    out[0] = points[0]
    out[-1] = points[-1]
    return out


@dataclass(frozen=True)
class LongTransferResult:
    trajectory: Trajectory
    waypoints: np.ndarray
    segment_costs: tuple[float, ...]


def transfer_long(
    trajectory: Trajectory,
    scene_map: SceneMap,
    grid: OccupancyGrid,
    stride: float = 1.0,
    snap_radius: float = SNAP_RADIUS,
) -> LongTransferResult:
    """Map arc-length waypoints and reconnect them with grid paths.

    Keeps the transferred trajectory out of occupied space even where the
    spline would drag intermediate points through geometry.
    """
    waypoints = sample_waypoints(trajectory.points, stride)
    mapped = scene_map.spline.apply_many(waypoints)
    if mapped.shape[0] == 1:
        return LongTransferResult(
            trajectory=Trajectory(frame_id=trajectory.frame_id, points=mapped),
            waypoints=mapped,
            segment_costs=(),
        )
    pieces: list[np.ndarray] = []
    costs: list[float] = []
    for i in range(mapped.shape[0] - 1):
        try:
            polyline, cost = astar(grid, mapped[i], mapped[i + 1], snap_radius)
        except NoPathError as exc:
            raise NoPathError(
                f"segment {i} (waypoint {i} to {i + 1}): {exc}"
            ) from exc
        costs.append(cost)
        pieces.append(polyline if i == 0 else polyline[1:])
    points = np.concatenate(pieces, axis=0)
    return LongTransferResult(
        trajectory=Trajectory(frame_id=trajectory.frame_id, points=points),
        waypoints=mapped,
        segment_costs=tuple(costs),
    )
