"""Occupancy grid built from range readings and the localization pose.

Each cell holds a signed integer confidence counter. A cell commits to
Occupied once its counter reaches +margin and to Free at -margin; anything
in between is Unknown. Occupied votes weigh +2, free votes -1, and
counters saturate at +/- counter_cap, so the map stays deterministic and
bounded.

Conventions (they make the traversal testable against a brute-force
oracle): a point on a cell edge belongs to the cell with the larger
coordinate, and a ray crossing exactly through a cell corner steps through
the candidate cell on the positive-y side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .kinematics import VehicleState


class CellState(Enum):
    UNKNOWN = "unknown"
    FREE = "free"
    OCCUPIED = "occupied"


@dataclass(frozen=True)
class RangeReading:
    """One time-of-flight reading from a body-mounted sensor.

    The mount offset is in the vehicle frame (x forward, y left), facing
    relative to the vehicle heading.
    """

    mount_x_m: float
    mount_y_m: float
    facing_rad: float
    measured_m: float
    max_range_m: float
    valid: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.measured_m <= self.max_range_m:
            raise ValueError("measured_m must lie in [0, max_range_m]")


class GridMap:
    """Fixed-extent uniform grid with per-cell signed confidence counters."""

    def __init__(
        self,
        cell_size_m: float,
        origin_x_m: float,
        origin_y_m: float,
        width_cells: int,
        height_cells: int,
        margin: int = 3,
        counter_cap: int = 10,
    ):
        if not cell_size_m > 0:
            raise ValueError("cell_size_m must be > 0")
        if width_cells <= 0 or height_cells <= 0:
            raise ValueError("grid dimensions must be positive")
        if not 0 < margin <= counter_cap:
            raise ValueError("need 0 < margin <= counter_cap")
        self.cell_size_m = float(cell_size_m)
        self.origin_x_m = float(origin_x_m)
        self.origin_y_m = float(origin_y_m)
        self.width_cells = int(width_cells)
        self.height_cells = int(height_cells)
        self.margin = int(margin)
        self.counter_cap = int(counter_cap)
        self.counters = np.zeros((self.width_cells, self.height_cells), dtype=np.int16)
        self._occupied_count = 0
        self._occupied_cache: np.ndarray | None = None

    @classmethod
    def centered(
        cls,
        center_x_m: float,
        center_y_m: float,
        extent_x_m: float = 20.0,
        extent_y_m: float = 20.0,
        cell_size_m: float = 0.05,
        margin: int = 3,
        counter_cap: int = 10,
    ) -> "GridMap":
        """Map of the given extent centered on a world point."""
        w = int(round(extent_x_m / cell_size_m))
        h = int(round(extent_y_m / cell_size_m))
        return cls(
            cell_size_m,
            center_x_m - w * cell_size_m / 2.0,
            center_y_m - h * cell_size_m / 2.0,
            w,
            h,
            margin,
            counter_cap,
        )

    def copy(self) -> "GridMap":
        dup = GridMap(
            self.cell_size_m,
            self.origin_x_m,
            self.origin_y_m,
            self.width_cells,
            self.height_cells,
            self.margin,
            self.counter_cap,
        )
        dup.counters = self.counters.copy()
        dup._occupied_count = self._occupied_count
        return dup

    def set_thresholds(self, margin: int | None = None, counter_cap: int | None = None) -> None:
        """Change margin/cap and recount committed cells."""
        if margin is not None:
            self.margin = int(margin)
        if counter_cap is not None:
            self.counter_cap = int(counter_cap)
        if not 0 < self.margin <= self.counter_cap:
            raise ValueError("need 0 < margin <= counter_cap")
        self._occupied_count = int((self.counters >= self.margin).sum())
        self._occupied_cache = None

    def cell_of(self, x_m: float, y_m: float) -> tuple[int, int]:
        """Containing cell indices; edge points go to the larger-coordinate cell."""
        return (
            math.floor((x_m - self.origin_x_m) / self.cell_size_m),
            math.floor((y_m - self.origin_y_m) / self.cell_size_m),
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width_cells and 0 <= iy < self.height_cells

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin_x_m + (ix + 0.5) * self.cell_size_m,
            self.origin_y_m + (iy + 0.5) * self.cell_size_m,
        )

    def state_of(self, ix: int, iy: int) -> CellState:
        if not self.in_bounds(ix, iy):
            return CellState.UNKNOWN
        c = int(self.counters[ix, iy])
        if c >= self.margin:
            return CellState.OCCUPIED
        if c <= -self.margin:
            return CellState.FREE
        return CellState.UNKNOWN

    def occupied_indices(self) -> np.ndarray:
        if self._occupied_count == 0:
            return np.empty((0, 2), dtype=int)
        if self._occupied_cache is None:
            self._occupied_cache = np.argwhere(self.counters >= self.margin)
        return self._occupied_cache

    def _vote(self, ix: int, iy: int, delta: int) -> None:
        if not self.in_bounds(ix, iy):
            return
        before = int(self.counters[ix, iy])
        after = min(max(before + delta, -self.counter_cap), self.counter_cap)
        self.counters[ix, iy] = after
        if (before >= self.margin) != (after >= self.margin):
            self._occupied_count += 1 if after >= self.margin else -1
            self._occupied_cache = None


def ray_cells(
    from_world: tuple[float, float],
    to_world: tuple[float, float],
    grid: GridMap,
) -> list[tuple[int, int]]:
    """Cells a segment traverses, in order, under the grid's conventions.

    Pure geometry: indices outside the map bounds are returned as-is so
    callers can clip. A zero-length segment yields its containing cell.
    """
    cs = grid.cell_size_m
    ux0 = (from_world[0] - grid.origin_x_m) / cs
    uy0 = (from_world[1] - grid.origin_y_m) / cs
    ux1 = (to_world[0] - grid.origin_x_m) / cs
    uy1 = (to_world[1] - grid.origin_y_m) / cs
    if not all(map(math.isfinite, (ux0, uy0, ux1, uy1))):
        raise ValueError("segment endpoints must be finite")

    ix, iy = math.floor(ux0), math.floor(uy0)
    ix_end, iy_end = math.floor(ux1), math.floor(uy1)
    cells = [(ix, iy)]
    dx = ux1 - ux0
    dy = uy1 - uy0
    step_x = 1 if dx > 0 else (-1 if dx < 0 else 0)
    step_y = 1 if dy > 0 else (-1 if dy < 0 else 0)
    if step_x:
        boundary_x = ix + 1 if step_x > 0 else ix
        t_max_x = (boundary_x - ux0) / dx
        t_delta_x = abs(1.0 / dx)
    else:
        t_max_x, t_delta_x = math.inf, math.inf
    if step_y:
        boundary_y = iy + 1 if step_y > 0 else iy
        t_max_y = (boundary_y - uy0) / dy
        t_delta_y = abs(1.0 / dy)
    else:
        t_max_y, t_delta_y = math.inf, math.inf

    budget = abs(ix_end - ix) + abs(iy_end - iy) + 4
    while (ix, iy) != (ix_end, iy_end) and budget > 0:
        budget -= 1
        if t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_delta_x
        elif t_max_y < t_max_x:
            iy += step_y
            t_max_y += t_delta_y
        else:
            # Exact corner crossing: pass through the positive-y candidate.
            if step_y > 0:
                iy += step_y
                t_max_y += t_delta_y
            else:
                ix += step_x
                t_max_x += t_delta_x
        cells.append((ix, iy))
    return cells


def integrate_reading(
    grid: GridMap,
    vehicle: VehicleState,
    reading: RangeReading,
    margin: int | None = None,
    counter_cap: int | None = None,
) -> GridMap:
    """Fold one range reading into the map (in place) and return it.

    Cells the ray crosses before the hit point get a free vote (-1); the
    hit cell gets an occupied vote (+2) only when the reading is shorter
    than max range, otherwise the whole ray to max range is voted free.
    Invalid readings and rays entirely off the map are no-ops.

    margin/counter_cap override the map's own settings for this call.
    """
    if margin is not None or counter_cap is not None:
        grid.set_thresholds(margin, counter_cap)
    if not reading.valid:
        return grid
    if not all(map(math.isfinite, (vehicle.x_m, vehicle.y_m, vehicle.theta_rad))):
        return grid

    cos_t = math.cos(vehicle.theta_rad)
    sin_t = math.sin(vehicle.theta_rad)
    sx = vehicle.x_m + reading.mount_x_m * cos_t - reading.mount_y_m * sin_t
    sy = vehicle.y_m + reading.mount_x_m * sin_t + reading.mount_y_m * cos_t
    angle = vehicle.theta_rad + reading.facing_rad
    hit = reading.measured_m < reading.max_range_m
    end = (
        sx + reading.measured_m * math.cos(angle),
        sy + reading.measured_m * math.sin(angle),
    )
    cells = ray_cells((sx, sy), end, grid)
    free_cells = cells[:-1] if hit else cells
    for ix, iy in free_cells:
        grid._vote(ix, iy, -1)
    if hit:
        grid._vote(*cells[-1], +2)
    return grid


def cell_state(grid: GridMap, world_point: tuple[float, float]) -> CellState:
    """Committed state of the cell containing a world point (Unknown off-map)."""
    return grid.state_of(*grid.cell_of(*world_point))


def nearest_obstacle(
    grid: GridMap,
    vehicle: VehicleState,
    sector_rad: float = math.pi / 3,
) -> float | None:
    """Distance to the nearest Occupied cell center in the forward sector."""
    if not sector_rad > 0:
        raise ValueError("sector_rad must be > 0")
    occ = grid.occupied_indices()
    if occ.size == 0:
        return None
    cx = grid.origin_x_m + (occ[:, 0] + 0.5) * grid.cell_size_m
    cy = grid.origin_y_m + (occ[:, 1] + 0.5) * grid.cell_size_m
    dx = cx - vehicle.x_m
    dy = cy - vehicle.y_m
    bearing = np.arctan2(dy, dx) - vehicle.theta_rad
    bearing = np.arctan2(np.sin(bearing), np.cos(bearing))
    in_sector = np.abs(bearing) <= sector_rad / 2.0
    if not in_sector.any():
        return None
    return float(np.min(np.hypot(dx[in_sector], dy[in_sector])))


PGM_UNKNOWN = 128
PGM_FREE = 255
PGM_OCCUPIED = 0


def write_pgm(grid: GridMap, path: str | Path) -> tuple[Path, Path]:
    """Dump the committed states as binary PGM plus a sidecar text header.

    Image rows run top to bottom = decreasing world y; Unknown=128,
    Free=255, Occupied=0.
    """
    path = Path(path)
    img = np.full((grid.height_cells, grid.width_cells), PGM_UNKNOWN, dtype=np.uint8)
    occupied = (grid.counters >= grid.margin).T
    free = (grid.counters <= -grid.margin).T
    img[free] = PGM_FREE
    img[occupied] = PGM_OCCUPIED
    img = img[::-1, :]
    header = f"P5\n{grid.width_cells} {grid.height_cells}\n255\n"
    path.write_bytes(header.encode("ascii") + img.tobytes())
    sidecar = path.with_suffix(path.suffix + ".txt")
    sidecar.write_text(
        "\n".join(
            [
                f"origin_x_m {grid.origin_x_m:.9g}",
                f"origin_y_m {grid.origin_y_m:.9g}",
                f"cell_size_m {grid.cell_size_m:.9g}",
                f"width_cells {grid.width_cells}",
                f"height_cells {grid.height_cells}",
                f"margin {grid.margin}",
                f"counter_cap {grid.counter_cap}",
                "values occupied=0 unknown=128 free=255",
                "row_order top_row_is_max_y",
                "",
            ]
        )
    )
    return path, sidecar
