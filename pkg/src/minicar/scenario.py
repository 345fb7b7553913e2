"""Scenario description: road geometry from piecewise segments, obstacles,
signs, traffic lights, parking bays, noise levels, and JSON (de)serialization
with a versioned schema. Bundled scenarios ship as package data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .control import PidGains, PurePursuitGains, SpeedPolicy, StanleyGains
from .fsm import ManeuverConfig, SignClass
from .kinematics import VehicleParams, VehicleState

SCHEMA_VERSION = 1
ROAD_STEP_M = 0.02


class ConfigError(Exception):
    """Invalid scenario/gain/noise configuration."""


@dataclass(frozen=True)
class RoadSegment:
    """One centerline piece: a straight run or a circular arc (+angle = left)."""

    kind: str
    length_m: float = 0.0
    radius_m: float = 0.0
    angle_rad: float = 0.0
    marked: bool = True

    def __post_init__(self) -> None:
        if self.kind == "straight":
            if not self.length_m > 0:
                raise ConfigError("straight segment needs length_m > 0")
        elif self.kind == "arc":
            if not self.radius_m > 0:
                raise ConfigError("arc segment needs radius_m > 0")
            if self.angle_rad == 0:
                raise ConfigError("arc segment needs angle_rad != 0")
        else:
            raise ConfigError(f"unknown segment kind {self.kind!r}")

    @property
    def arc_length_m(self) -> float:
        return self.length_m if self.kind == "straight" else abs(self.angle_rad) * self.radius_m


class Road:
    """Dense polyline of the centerline with exact per-point headings."""

    def __init__(self, segments: list[RoadSegment], lane_width_m: float, step_m: float = ROAD_STEP_M):
        if not segments:
            raise ConfigError("road needs at least one segment")
        if not lane_width_m > 0:
            raise ConfigError("lane_width_m must be > 0")
        self.segments = list(segments)
        self.lane_width_m = lane_width_m
        xs, ys, hs, ss, marked = [0.0], [0.0], [0.0], [0.0], [True]
        x = y = h = s = 0.0
        for seg in segments:
            seg_len = seg.arc_length_m
            n = max(2, int(math.ceil(seg_len / step_m)) + 1)
            local = np.linspace(0.0, seg_len, n)[1:]
            if seg.kind == "straight":
                px = x + local * math.cos(h)
                py = y + local * math.sin(h)
                ph = np.full_like(local, h)
            else:
                sign = 1.0 if seg.angle_rad > 0 else -1.0
                cx = x - sign * seg.radius_m * math.sin(h)
                cy = y + sign * seg.radius_m * math.cos(h)
                swept = sign * local / seg.radius_m
                ph = h + swept
                px = cx + sign * seg.radius_m * np.sin(ph)
                py = cy - sign * seg.radius_m * np.cos(ph)
            xs.extend(px.tolist())
            ys.extend(py.tolist())
            hs.extend(ph.tolist())
            ss.extend((s + local).tolist())
            marked.extend([seg.marked] * len(local))
            x, y, h, s = float(px[-1]), float(py[-1]), float(ph[-1]), s + seg_len
        marked[0] = segments[0].marked
        self.xs = np.array(xs)
        self.ys = np.array(ys)
        self.headings = np.array(hs)
        self.ss = np.array(ss)
        self.marked = np.array(marked, dtype=bool)
        self.length_m = s
        cos_h, sin_h = np.cos(self.headings), np.sin(self.headings)
        half = lane_width_m / 2.0
        # Left boundary sits at +half along the left normal (-sin, cos).
        self.left_xs = self.xs - half * sin_h
        self.left_ys = self.ys + half * cos_h
        self.right_xs = self.xs + half * sin_h
        self.right_ys = self.ys - half * cos_h

    def pose_at(self, s_m: float) -> tuple[float, float, float]:
        """Centerline pose (x, y, heading) at arc length s (clamped)."""
        i = int(np.searchsorted(self.ss, min(max(s_m, 0.0), self.length_m)))
        i = min(i, len(self.ss) - 1)
        return float(self.xs[i]), float(self.ys[i]), float(self.headings[i])

    def project(self, x_m: float, y_m: float) -> tuple[float, float, float, bool]:
        """Nearest-centerline projection.

        Returns (s, lateral offset with vehicle-right positive, road heading,
        marked flag at that station).
        """
        d2 = (self.xs - x_m) ** 2 + (self.ys - y_m) ** 2
        i = int(np.argmin(d2))
        h = float(self.headings[i])
        rel_x = x_m - float(self.xs[i])
        rel_y = y_m - float(self.ys[i])
        along = rel_x * math.cos(h) + rel_y * math.sin(h)
        offset_left = -rel_x * math.sin(h) + rel_y * math.cos(h)
        return float(self.ss[i]) + along, -offset_left, h, bool(self.marked[i])

    def point_at(self, s_m: float, lateral_right_m: float) -> tuple[float, float]:
        """World point offset laterally (right positive) from the centerline."""
        x, y, h = self.pose_at(s_m)
        return x + lateral_right_m * math.sin(h), y - lateral_right_m * math.cos(h)


@dataclass(frozen=True)
class Obstacle:
    """Oriented rectangle; length runs along yaw."""

    x_m: float
    y_m: float
    length_m: float
    width_m: float
    yaw_rad: float = 0.0

    def __post_init__(self) -> None:
        if not (self.length_m > 0 and self.width_m > 0):
            raise ConfigError("obstacle dimensions must be > 0")

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.yaw_rad), math.sin(self.yaw_rad)
        hl, hw = self.length_m / 2.0, self.width_m / 2.0
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x_m, self.y_m])


class ObstacleField:
    """Vectorized ray casting and overlap tests against many rectangles."""

    def __init__(self, obstacles: list[Obstacle]):
        self.obstacles = list(obstacles)
        n = len(obstacles)
        self.cx = np.array([o.x_m for o in obstacles]) if n else np.empty(0)
        self.cy = np.array([o.y_m for o in obstacles]) if n else np.empty(0)
        self.cos = np.array([math.cos(o.yaw_rad) for o in obstacles]) if n else np.empty(0)
        self.sin = np.array([math.sin(o.yaw_rad) for o in obstacles]) if n else np.empty(0)
        self.hl = np.array([o.length_m / 2.0 for o in obstacles]) if n else np.empty(0)
        self.hw = np.array([o.width_m / 2.0 for o in obstacles]) if n else np.empty(0)

    def __len__(self) -> int:
        return len(self.obstacles)

    def ray_distance(self, ox: float, oy: float, angle: float) -> float:
        """Distance to the nearest rectangle along a ray, inf when clear."""
        if not len(self):
            return math.inf
        dx, dy = math.cos(angle), math.sin(angle)
        rel_x = ox - self.cx
        rel_y = oy - self.cy
        lx = self.cos * rel_x + self.sin * rel_y
        ly = -self.sin * rel_x + self.cos * rel_y
        ldx = self.cos * dx + self.sin * dy
        ldy = -self.sin * dx + self.cos * dy
        with np.errstate(divide="ignore", invalid="ignore"):
            t_lo_x = np.where(ldx != 0, (-self.hl - lx) / ldx, -np.inf)
            t_hi_x = np.where(ldx != 0, (self.hl - lx) / ldx, np.inf)
            t_lo_y = np.where(ldy != 0, (-self.hw - ly) / ldy, -np.inf)
            t_hi_y = np.where(ldy != 0, (self.hw - ly) / ldy, np.inf)
        # Degenerate slabs (ray parallel to an axis) hit only if inside.
        parallel_x_miss = (ldx == 0) & (np.abs(lx) > self.hl)
        parallel_y_miss = (ldy == 0) & (np.abs(ly) > self.hw)
        t_min_x = np.minimum(t_lo_x, t_hi_x)
        t_max_x = np.maximum(t_lo_x, t_hi_x)
        t_min_y = np.minimum(t_lo_y, t_hi_y)
        t_max_y = np.maximum(t_lo_y, t_hi_y)
        t_enter = np.maximum(t_min_x, t_min_y)
        t_exit = np.minimum(t_max_x, t_max_y)
        hit = (t_enter <= t_exit) & (t_exit >= 0) & ~parallel_x_miss & ~parallel_y_miss
        if not hit.any():
            return math.inf
        return float(np.maximum(t_enter[hit], 0.0).min())

    def any_overlap(self, corners: np.ndarray) -> int | None:
        """Index of the first rectangle overlapping the given quad, else None."""
        for i, obs in enumerate(self.obstacles):
            if _rects_overlap(corners, obs.corners()):
                return i
        return None


def _rects_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quads."""
    for quad in (a, b):
        for i in range(2):
            edge = quad[(i + 1) % 4] - quad[i]
            axis = np.array([-edge[1], edge[0]])
            pa = a @ axis
            pb = b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


@dataclass(frozen=True)
class SignSpec:
    sign: SignClass
    s_m: float
    side: str = "right"
    height_mm: float = 100.0
    lateral_m: float | None = None  # default: just off the lane edge

    def __post_init__(self) -> None:
        if self.side not in ("left", "right"):
            raise ConfigError("sign side must be 'left' or 'right'")
        if not self.height_mm > 0:
            raise ConfigError("sign height_mm must be > 0")


@dataclass(frozen=True)
class TrafficLightSpec:
    s_m: float
    schedule: tuple[tuple[str, float], ...]
    side: str = "right"
    height_mm: float = 120.0
    lateral_m: float | None = None

    def __post_init__(self) -> None:
        if not self.schedule:
            raise ConfigError("traffic light needs a schedule")
        for state, duration in self.schedule:
            if state not in ("red", "green"):
                raise ConfigError("traffic light states must be 'red' or 'green'")
            if not duration > 0:
                raise ConfigError("traffic light interval must be > 0")

    def state_at(self, t: float) -> SignClass:
        cycle = sum(d for _, d in self.schedule)
        phase = t % cycle
        for state, duration in self.schedule:
            if phase < duration:
                return (
                    SignClass.TRAFFIC_LIGHT_RED if state == "red" else SignClass.TRAFFIC_LIGHT_GREEN
                )
            phase -= duration
        return SignClass.TRAFFIC_LIGHT_GREEN


@dataclass(frozen=True)
class ParkingBaySpec:
    """Open kerbside slot; loading materializes the two flanking parked cars."""

    s_m: float
    length_m: float
    depth_m: float = 0.3
    side: str = "right"

    def __post_init__(self) -> None:
        if not (self.length_m > 0 and self.depth_m > 0):
            raise ConfigError("parking bay dimensions must be > 0")
        if self.side not in ("left", "right"):
            raise ConfigError("bay side must be 'left' or 'right'")


@dataclass(frozen=True)
class WallSpec:
    """Solid boundary walls along a stretch of road (e.g. a tunnel)."""

    s_from_m: float
    s_to_m: float
    side: str = "both"

    def __post_init__(self) -> None:
        if not self.s_to_m > self.s_from_m:
            raise ConfigError("wall range must be non-empty")
        if self.side not in ("left", "right", "both"):
            raise ConfigError("wall side must be 'left', 'right' or 'both'")


@dataclass(frozen=True)
class SensorNoise:
    """Per-sensor noise levels; all zero by default (deterministic truth)."""

    lane_sigma_px: float = 0.0
    lane_dropout_left: float = 0.0
    lane_dropout_right: float = 0.0
    range_sigma_m: float = 0.0
    gyro_bias_rps: float = 0.0
    gyro_sigma_rps: float = 0.0
    detection_sigma_px: float = 0.0

    def __post_init__(self) -> None:
        for name in ("lane_sigma_px", "range_sigma_m", "gyro_sigma_rps", "detection_sigma_px"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("lane_dropout_left", "lane_dropout_right"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class GainSet:
    stanley: StanleyGains = field(default_factory=StanleyGains)
    pid: PidGains = field(default_factory=PidGains)
    pure_pursuit: PurePursuitGains = field(default_factory=PurePursuitGains)


@dataclass(frozen=True)
class SignPlacement:
    """A sign spec resolved to a world position with a stable id."""

    sign_id: int
    spec: SignSpec | TrafficLightSpec
    x_m: float
    y_m: float

    def sign_class_at(self, t: float) -> SignClass:
        if isinstance(self.spec, TrafficLightSpec):
            return self.spec.state_at(t)
        return self.spec.sign

    @property
    def height_mm(self) -> float:
        return self.spec.height_mm


class Scenario:
    """Everything a run needs; fully deterministic given its seed."""

    def __init__(
        self,
        name: str,
        segments: list[RoadSegment],
        duration_s: float,
        dt: float = 0.01,
        seed: int = 0,
        lane_width_m: float = 0.7,
        description: str = "",
        start_lateral_m: float = 0.0,
        start_heading_offset_rad: float = 0.0,
        obstacles: list[Obstacle] | None = None,
        signs: list[SignSpec] | None = None,
        traffic_lights: list[TrafficLightSpec] | None = None,
        parking_bays: list[ParkingBaySpec] | None = None,
        walls: list[WallSpec] | None = None,
        noise: SensorNoise | None = None,
        vehicle: VehicleParams | None = None,
        speed: SpeedPolicy | None = None,
        gains: GainSet | None = None,
        maneuvers: ManeuverConfig | None = None,
        road_shoulder_m: float = 0.5,
    ):
        if not dt > 0:
            raise ConfigError("dt must be > 0")
        if not duration_s > 0:
            raise ConfigError("duration_s must be > 0")
        self.name = name
        self.description = description
        self.dt = dt
        self.duration_s = duration_s
        self.seed = int(seed)
        self.lane_width_m = lane_width_m
        self.road = Road(segments, lane_width_m)
        self.start_lateral_m = start_lateral_m
        self.start_heading_offset_rad = start_heading_offset_rad
        self.signs = list(signs or [])
        self.traffic_lights = list(traffic_lights or [])
        self.parking_bays = list(parking_bays or [])
        self.walls = list(walls or [])
        self.noise = noise or SensorNoise()
        self.vehicle = vehicle or VehicleParams()
        self.speed = speed or SpeedPolicy()
        self.gains = gains or GainSet()
        self.maneuvers = maneuvers or ManeuverConfig()
        self.road_shoulder_m = road_shoulder_m
        self._explicit_obstacles = list(obstacles or [])
        self.obstacles = ObstacleField(
            self._explicit_obstacles + self._bay_obstacles() + self._wall_obstacles()
        )
        self.sign_placements = self._place_signs()

    def start_state(self) -> VehicleState:
        x, y = self.road.point_at(0.0, self.start_lateral_m)
        _, _, h = self.road.pose_at(0.0)
        return VehicleState(x, y, h + self.start_heading_offset_rad)

    def _bay_obstacles(self) -> list[Obstacle]:
        out = []
        car_len = self.vehicle.overall_length_m
        car_w = self.vehicle.overall_width_m
        for bay in self.parking_bays:
            lateral = self.lane_width_m / 2.0 + bay.depth_m / 2.0
            if bay.side == "left":
                lateral = -lateral
            for s_center in (bay.s_m - car_len / 2.0, bay.s_m + bay.length_m + car_len / 2.0):
                x, y = self.road.point_at(s_center, lateral)
                _, _, h = self.road.pose_at(s_center)
                out.append(Obstacle(x, y, car_len, car_w, h))
        return out

    def _wall_obstacles(self) -> list[Obstacle]:
        out = []
        piece = 0.2
        for wall in self.walls:
            sides = ("left", "right") if wall.side == "both" else (wall.side,)
            for side in sides:
                lateral = self.lane_width_m / 2.0 + 0.02
                if side == "left":
                    lateral = -lateral
                s = wall.s_from_m
                while s < wall.s_to_m:
                    seg_len = min(piece, wall.s_to_m - s)
                    mid = s + seg_len / 2.0
                    x, y = self.road.point_at(mid, lateral)
                    _, _, h = self.road.pose_at(mid)
                    out.append(Obstacle(x, y, seg_len + 0.02, 0.02, h))
                    s += seg_len
        return out

    def _place_signs(self) -> list[SignPlacement]:
        out = []
        specs: list[SignSpec | TrafficLightSpec] = list(self.signs) + list(self.traffic_lights)
        for idx, spec in enumerate(specs):
            lateral = spec.lateral_m if spec.lateral_m is not None else self.lane_width_m / 2.0 + 0.1
            if spec.side == "left":
                lateral = -lateral
            x, y = self.road.point_at(spec.s_m, lateral)
            out.append(SignPlacement(idx, spec, x, y))
        return out

    # -- JSON ---------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario must be a JSON object")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        known = {
            "schema_version",
            "name",
            "description",
            "dt",
            "duration_s",
            "seed",
            "lane_width_m",
            "road",
            "start",
            "obstacles",
            "signs",
            "traffic_lights",
            "parking_bays",
            "walls",
            "noise",
            "vehicle",
            "speed",
            "gains",
            "maneuvers",
            "road_shoulder_m",
        }
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            segments = [_build(RoadSegment, seg, "road segment") for seg in data.get("road", [])]
            start = data.get("start", {})
            sign_specs = []
            for raw in data.get("signs", []):
                raw = dict(raw)
                try:
                    raw["sign"] = SignClass(raw.get("sign"))
                except ValueError as exc:
                    raise ConfigError(f"unknown sign class {raw.get('sign')!r}") from exc
                sign_specs.append(_build(SignSpec, raw, "sign"))
            lights = []
            for raw in data.get("traffic_lights", []):
                raw = dict(raw)
                raw["schedule"] = tuple(
                    (str(state), float(dur)) for state, dur in raw.get("schedule", [])
                )
                lights.append(_build(TrafficLightSpec, raw, "traffic light"))
            return cls(
                name=str(data.get("name", "unnamed")),
                description=str(data.get("description", "")),
                dt=float(data.get("dt", 0.01)),
                duration_s=float(data["duration_s"]),
                seed=int(data.get("seed", 0)),
                lane_width_m=float(data.get("lane_width_m", 0.7)),
                segments=segments,
                start_lateral_m=float(start.get("lateral_m", 0.0)),
                start_heading_offset_rad=float(start.get("heading_offset_rad", 0.0)),
                obstacles=[_build(Obstacle, o, "obstacle") for o in data.get("obstacles", [])],
                signs=sign_specs,
                traffic_lights=lights,
                parking_bays=[
                    _build(ParkingBaySpec, b, "parking bay") for b in data.get("parking_bays", [])
                ],
                walls=[_build(WallSpec, w, "wall") for w in data.get("walls", [])],
                noise=_build(SensorNoise, data.get("noise", {}), "noise"),
                vehicle=_build(VehicleParams, data.get("vehicle", {}), "vehicle"),
                speed=_build(SpeedPolicy, data.get("speed", {}), "speed"),
                gains=_build_gains(data.get("gains", {})),
                maneuvers=_build(ManeuverConfig, data.get("maneuvers", {}), "maneuvers"),
                road_shoulder_m=float(data.get("road_shoulder_m", 0.5)),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario missing required key: {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario value: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)


def _build(cls, data: dict, what: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a JSON object")
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from exc


def _build_gains(data: dict) -> GainSet:
    if not isinstance(data, dict):
        raise ConfigError("gains must be a JSON object")
    unknown = set(data) - {"stanley", "pid", "pure_pursuit"}
    if unknown:
        raise ConfigError(f"unknown gains keys: {sorted(unknown)}")
    return GainSet(
        stanley=_build(StanleyGains, data.get("stanley", {}), "stanley gains"),
        pid=_build(PidGains, data.get("pid", {}), "pid gains"),
        pure_pursuit=_build(PurePursuitGains, data.get("pure_pursuit", {}), "pure pursuit gains"),
    )


def merge_gains(base: GainSet, overrides: dict | None) -> GainSet:
    """Apply a partial gains dict (same shape as the JSON) over a GainSet."""
    if not overrides:
        return base
    merged = _build_gains(overrides)
    out = base
    if "stanley" in overrides:
        out = replace(out, stanley=merged.stanley)
    if "pid" in overrides:
        out = replace(out, pid=merged.pid)
    if "pure_pursuit" in overrides:
        out = replace(out, pure_pursuit=merged.pure_pursuit)
    return out


def bundled_scenario_names() -> list[str]:
    root = resources.files("minicar").joinpath("scenarios")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path: str | Path) -> Scenario:
    """Load a scenario from a file path or a bundled scenario name."""
    path = Path(name_or_path)
    if path.suffix == ".json" or path.exists():
        return Scenario.from_json(path)
    candidate = resources.files("minicar").joinpath("scenarios").joinpath(f"{name_or_path}.json")
    if candidate.is_file():
        return Scenario.from_dict(json.loads(candidate.read_text()))
    raise ConfigError(
        f"no such scenario {name_or_path!r}; bundled: {', '.join(bundled_scenario_names())}"
    )
