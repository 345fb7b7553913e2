"""Decision layer: sign events, std-dev stream filtering, the parallel
parking and intersection state machines, and reactions to the remaining
sign classes.

The FSMs emit *overlays* (optional speed/steer overrides). The simulation
loop owns arbitration: overlay steer replaces the lane controller's,
overlay speed composes with the base command by minimum magnitude.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

from .kinematics import VehicleParams, VehicleState, normalize_angle


class SignClass(str, Enum):
    PARK = "park"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STRAIGHT = "straight"
    TUNNEL = "tunnel"
    PEDESTRIAN_CROSSING = "pedestrian_crossing"
    NO_OVERTAKING = "no_overtaking"
    TRAFFIC_LIGHT_RED = "traffic_light_red"
    TRAFFIC_LIGHT_GREEN = "traffic_light_green"


TURN_SIGNS = (SignClass.TURN_LEFT, SignClass.TURN_RIGHT, SignClass.STRAIGHT)
LIGHT_SIGNS = (SignClass.TRAFFIC_LIGHT_RED, SignClass.TRAFFIC_LIGHT_GREEN)


@dataclass(frozen=True)
class SignEvent:
    """One perceived sign: class, estimated distance, detector confidence."""

    sign: SignClass
    distance_m: float
    confidence: float = 1.0
    sign_id: int | None = None

    def __post_init__(self) -> None:
        if self.distance_m < 0:
            raise ValueError("distance_m must be >= 0")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")


@dataclass(frozen=True)
class ActuatorFlags:
    hazard_lights: bool = False
    headlights: bool = False
    overtaking_allowed: bool = True


@dataclass(frozen=True)
class Overlay:
    """Optional per-step command overrides emitted by a state machine."""

    speed_mps: float | None = None
    steer_rad: float | None = None


@dataclass(frozen=True)
class Transition:
    machine: str
    from_node: str
    to_node: str
    cause: str


class StatFilter:
    """Standard-deviation gate over a sliding window of scalar samples.

    A sample is rejected when it sits more than k_sigma sample standard
    deviations from the window mean (only once the window holds at least 4
    samples). Accepted samples enter the FIFO window; the filtered value is
    the window mean.
    """

    WARMUP = 4

    def __init__(self, window_size: int = 8, k_sigma: float = 2.0):
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        if not k_sigma > 0:
            raise ValueError("k_sigma must be > 0")
        self.k_sigma = k_sigma
        self.window: deque[float] = deque(maxlen=window_size)

    def update(self, sample: float) -> tuple[bool, float]:
        if not math.isfinite(sample):
            raise ValueError("sample must be finite")
        n = len(self.window)
        if n >= self.WARMUP:
            mean = sum(self.window) / n
            var = sum((v - mean) ** 2 for v in self.window) / (n - 1)
            if abs(sample - mean) > self.k_sigma * math.sqrt(var):
                return False, mean
        self.window.append(sample)
        return True, sum(self.window) / len(self.window)


def filter_sample(filt: StatFilter, sample: float) -> tuple[bool, float]:
    """Functional alias for StatFilter.update."""
    return filt.update(sample)


@dataclass(frozen=True)
class ManeuverConfig:
    """Tunables shared by the decision layer; lengths in meters."""

    trigger_distance_m: float = 1.0
    gap_length_m: float | None = None  # default 1.2 * overall length
    gap_depth_m: float | None = None  # default 1.2 * overall width
    collision_stop_m: float = 0.10
    heading_tol_rad: float = math.radians(5.0)
    filter_window: int = 8
    filter_k_sigma: float = 2.0
    scan_speed_mps: float = 0.3
    park_speed_mps: float = 0.15
    scan_length_m: float = 3.0
    parked_dwell_s: float = 1.0
    straighten_tol_rad: float = math.radians(1.0)
    pullout_backup_m: float = 0.08
    max_gap_m: float = 1.2
    parking_side: str = "right"
    turn_radius_m: float = 0.6
    turn_speed_mps: float = 0.3
    stop_distance_m: float = 0.5
    cross_length_m: float = 1.2
    crossing_zone_m: float = 1.0
    crossing_speed_mps: float = 0.3

    def resolved_gap_length(self, params: VehicleParams) -> float:
        return self.gap_length_m if self.gap_length_m is not None else 1.2 * params.overall_length_m

    def resolved_gap_depth(self, params: VehicleParams) -> float:
        return self.gap_depth_m if self.gap_depth_m is not None else 1.2 * params.overall_width_m


class ParkingNode(str, Enum):
    LANE_FOLLOW = "lane_follow"
    HAZARD_ON = "hazard_on"
    SCAN_FOR_GAP = "scan_for_gap"
    ALIGN_PRE_GAP = "align_pre_gap"
    REVERSE_IN = "reverse_in"
    STRAIGHTEN = "straighten"
    PARKED = "parked"
    PULL_OUT = "pull_out"
    RESUME = "resume"


# Hazard lights stay on from HazardOn through PullOut inclusive.
PARKING_HAZARD_NODES = frozenset(
    {
        ParkingNode.HAZARD_ON,
        ParkingNode.SCAN_FOR_GAP,
        ParkingNode.ALIGN_PRE_GAP,
        ParkingNode.REVERSE_IN,
        ParkingNode.STRAIGHTEN,
        ParkingNode.PARKED,
        ParkingNode.PULL_OUT,
    }
)

PARKING_EDGES: dict[ParkingNode, frozenset[ParkingNode]] = {
    ParkingNode.LANE_FOLLOW: frozenset({ParkingNode.LANE_FOLLOW, ParkingNode.HAZARD_ON}),
    ParkingNode.HAZARD_ON: frozenset({ParkingNode.SCAN_FOR_GAP}),
    ParkingNode.SCAN_FOR_GAP: frozenset(
        {ParkingNode.SCAN_FOR_GAP, ParkingNode.ALIGN_PRE_GAP, ParkingNode.LANE_FOLLOW}
    ),
    ParkingNode.ALIGN_PRE_GAP: frozenset({ParkingNode.ALIGN_PRE_GAP, ParkingNode.REVERSE_IN}),
    ParkingNode.REVERSE_IN: frozenset({ParkingNode.REVERSE_IN, ParkingNode.STRAIGHTEN}),
    ParkingNode.STRAIGHTEN: frozenset({ParkingNode.STRAIGHTEN, ParkingNode.PARKED}),
    ParkingNode.PARKED: frozenset({ParkingNode.PARKED, ParkingNode.PULL_OUT}),
    ParkingNode.PULL_OUT: frozenset({ParkingNode.PULL_OUT, ParkingNode.RESUME}),
    ParkingNode.RESUME: frozenset({ParkingNode.RESUME, ParkingNode.HAZARD_ON}),
}


class ParkingFsm:
    """Sign-triggered parallel parking against the configured side.

    Gap search integrates side-sensor clearance over odometry travel; the
    park itself is the classic two-arc script at full lock, reversed again
    for the pull-out. Any range reading under collision_stop_m freezes
    motion for that step without leaving the current node.
    """

    def __init__(self, params: VehicleParams, config: ManeuverConfig | None = None):
        self.params = params
        self.config = config or ManeuverConfig()
        self.node = ParkingNode.LANE_FOLLOW
        self.transitions: list[Transition] = []
        self.events: list[dict] = []
        self._prev_pose: VehicleState | None = None
        self._travel = 0.0
        self._lane_heading = 0.0
        self._scan_start = 0.0
        self._streak_start: float | None = None
        self._was_blocked = False
        self._block_read: float | None = None
        self._near_edge = 0.0
        self._far_edge = 0.0
        self._far_frozen = False
        self._phi = 0.0
        self._reverse_run = 0.0
        self._reverse_start = 0.0
        self._dwell = 0.0
        self._pullout_phase = "backup"
        self._phase_travel = 0.0

    # Sensor mounted mid-wheelbase on the body side; body center sits
    # ahead of the rear axle by half the overhang difference.
    @property
    def _sensor_offset(self) -> float:
        return self.params.wheelbase_m / 2.0

    @property
    def _center_offset(self) -> float:
        return self.params.overall_length_m / 2.0 - self.params.rear_overhang_m

    def _goto(self, node: ParkingNode, cause: str) -> None:
        self.transitions.append(Transition("parking", self.node.value, node.value, cause))
        self.node = node

    def _steer_lock(self, inward: bool) -> float:
        # inward = toward the parking side.
        sign = -1.0 if self.config.parking_side == "right" else 1.0
        return sign * self.params.max_steer_rad if inward else -sign * self.params.max_steer_rad

    def step(
        self,
        events: list[SignEvent],
        ranges: dict[str, float],
        pose: VehicleState,
        dt: float,
    ) -> tuple[Overlay, bool]:
        """Advance one step; returns (overlay, hazard_lights)."""
        cfg = self.config
        if self._prev_pose is not None:
            ds = math.hypot(pose.x_m - self._prev_pose.x_m, pose.y_m - self._prev_pose.y_m)
        else:
            ds = 0.0
        self._prev_pose = pose
        self._travel += ds
        side_range = ranges.get(cfg.parking_side, math.inf)
        gap_depth = cfg.resolved_gap_depth(self.params)
        overlay = Overlay()

        if self.node in (ParkingNode.LANE_FOLLOW, ParkingNode.RESUME):
            for ev in events:
                if ev.sign == SignClass.PARK and ev.distance_m <= cfg.trigger_distance_m:
                    self._lane_heading = pose.theta_rad
                    self._goto(ParkingNode.HAZARD_ON, "park_sign")
                    break

        elif self.node == ParkingNode.HAZARD_ON:
            self._scan_start = self._travel
            self._streak_start = None
            self._was_blocked = False
            self._block_read = None
            self._goto(ParkingNode.SCAN_FOR_GAP, "begin_scan")
            overlay = Overlay(speed_mps=cfg.scan_speed_mps)

        elif self.node == ParkingNode.SCAN_FOR_GAP:
            overlay = Overlay(speed_mps=cfg.scan_speed_mps)
            sensor_pos = self._travel + self._sensor_offset
            if side_range >= gap_depth:
                # A usable gap starts at a blocked->clear edge; open road
                # before the first parked car does not count.
                if self._streak_start is None and self._was_blocked:
                    self._streak_start = sensor_pos
                    self._was_blocked = False
                elif (
                    self._streak_start is not None
                    and sensor_pos - self._streak_start >= cfg.resolved_gap_length(self.params)
                ):
                    self._near_edge = self._streak_start
                    self._far_edge = sensor_pos
                    self._far_frozen = False
                    self._plan_reverse()
                    self._goto(ParkingNode.ALIGN_PRE_GAP, "gap_found")
            else:
                self._streak_start = None
                self._was_blocked = True
                self._block_read = side_range
            if self._travel - self._scan_start > cfg.scan_length_m and self.node == ParkingNode.SCAN_FOR_GAP:
                self.events.append({"type": "no_gap", "scanned_m": self._travel - self._scan_start})
                self._goto(ParkingNode.LANE_FOLLOW, "no_gap")
                overlay = Overlay()

        elif self.node == ParkingNode.ALIGN_PRE_GAP:
            overlay = Overlay(speed_mps=cfg.scan_speed_mps)
            sensor_pos = self._travel + self._sensor_offset
            if not self._far_frozen:
                if side_range >= gap_depth:
                    self._far_edge = min(sensor_pos, self._near_edge + cfg.max_gap_m)
                else:
                    self._far_frozen = True
                self._plan_reverse()
            if self._travel >= self._reverse_start:
                self._goto(ParkingNode.REVERSE_IN, "aligned")
                overlay = Overlay(speed_mps=-cfg.park_speed_mps, steer_rad=self._steer_lock(True))

        elif self.node == ParkingNode.REVERSE_IN:
            overlay = Overlay(speed_mps=-cfg.park_speed_mps, steer_rad=self._steer_lock(True))
            if abs(normalize_angle(pose.theta_rad - self._lane_heading)) >= self._phi:
                self._goto(ParkingNode.STRAIGHTEN, "angled_in")
                overlay = Overlay(speed_mps=-cfg.park_speed_mps, steer_rad=self._steer_lock(False))

        elif self.node == ParkingNode.STRAIGHTEN:
            overlay = Overlay(speed_mps=-cfg.park_speed_mps, steer_rad=self._steer_lock(False))
            heading_diff = abs(normalize_angle(pose.theta_rad - self._lane_heading))
            if heading_diff <= cfg.straighten_tol_rad:
                self._dwell = 0.0
                self.events.append(
                    {
                        "type": "parked_check",
                        "heading_diff_rad": heading_diff,
                        "side_clearance_m": side_range,
                    }
                )
                self._goto(ParkingNode.PARKED, "straightened")
                overlay = Overlay(speed_mps=0.0, steer_rad=0.0)

        elif self.node == ParkingNode.PARKED:
            overlay = Overlay(speed_mps=0.0, steer_rad=0.0)
            self._dwell += dt
            if self._dwell >= cfg.parked_dwell_s:
                self._pullout_phase = "backup"
                self._phase_travel = 0.0
                self._goto(ParkingNode.PULL_OUT, "dwell_done")
                overlay = Overlay(speed_mps=-cfg.park_speed_mps, steer_rad=0.0)

        elif self.node == ParkingNode.PULL_OUT:
            heading_diff = abs(normalize_angle(pose.theta_rad - self._lane_heading))
            if self._pullout_phase == "backup":
                overlay = Overlay(speed_mps=-cfg.park_speed_mps, steer_rad=0.0)
                self._phase_travel += ds
                if self._phase_travel >= cfg.pullout_backup_m:
                    self._pullout_phase = "arc_out"
            elif self._pullout_phase == "arc_out":
                overlay = Overlay(speed_mps=cfg.park_speed_mps, steer_rad=self._steer_lock(False))
                if heading_diff >= self._phi:
                    self._pullout_phase = "arc_back"
            else:
                overlay = Overlay(speed_mps=cfg.park_speed_mps, steer_rad=self._steer_lock(True))
                if heading_diff <= cfg.straighten_tol_rad:
                    self._goto(ParkingNode.RESUME, "back_in_lane")
                    overlay = Overlay()

        if self.node in PARKING_HAZARD_NODES:
            blocked = [r for r in ranges.values() if math.isfinite(r)]
            if blocked and min(blocked) < cfg.collision_stop_m:
                overlay = replace(overlay, speed_mps=0.0)

        return overlay, self.node in PARKING_HAZARD_NODES

    def _plan_reverse(self) -> None:
        """Fix the two-arc geometry from the measured gap and side clearance."""
        cfg = self.config
        lateral = (self._block_read if self._block_read is not None else cfg.resolved_gap_depth(self.params))
        lateral += self.params.overall_width_m
        radius = self.params.wheelbase_m / math.tan(self.params.max_steer_rad)
        self._phi = math.acos(min(max(1.0 - lateral / (2.0 * radius), -1.0), 1.0))
        self._reverse_run = 2.0 * radius * math.sin(self._phi)
        center = (self._near_edge + self._far_edge) / 2.0
        final_axle = center - self._center_offset
        self._reverse_start = final_axle + self._reverse_run


def parking_step(
    fsm: ParkingFsm,
    events: list[SignEvent],
    ranges: dict[str, float],
    pose: VehicleState,
    dt: float,
) -> tuple[ParkingFsm, Overlay, bool]:
    """Functional wrapper around ParkingFsm.step."""
    overlay, hazard = fsm.step(events, ranges, pose, dt)
    return fsm, overlay, hazard


class IntersectionNode(str, Enum):
    LANE_FOLLOW = "lane_follow"
    SIGN_SEEN = "sign_seen"
    ALIGN = "align"
    WAIT_TRAFFIC_LIGHT = "wait_traffic_light"
    EXECUTE_TURN = "execute_turn"
    EXIT = "exit"


INTERSECTION_EDGES: dict[IntersectionNode, frozenset[IntersectionNode]] = {
    IntersectionNode.LANE_FOLLOW: frozenset(
        {IntersectionNode.LANE_FOLLOW, IntersectionNode.SIGN_SEEN}
    ),
    IntersectionNode.SIGN_SEEN: frozenset({IntersectionNode.ALIGN}),
    IntersectionNode.ALIGN: frozenset({IntersectionNode.ALIGN, IntersectionNode.WAIT_TRAFFIC_LIGHT}),
    IntersectionNode.WAIT_TRAFFIC_LIGHT: frozenset(
        {IntersectionNode.WAIT_TRAFFIC_LIGHT, IntersectionNode.EXECUTE_TURN}
    ),
    IntersectionNode.EXECUTE_TURN: frozenset(
        {
            IntersectionNode.EXECUTE_TURN,
            IntersectionNode.WAIT_TRAFFIC_LIGHT,
            IntersectionNode.EXIT,
        }
    ),
    IntersectionNode.EXIT: frozenset({IntersectionNode.LANE_FOLLOW}),
}

_TURN_TARGETS = {
    SignClass.TURN_LEFT: math.pi / 2.0,
    SignClass.TURN_RIGHT: -math.pi / 2.0,
    SignClass.STRAIGHT: 0.0,
}


class IntersectionFsm:
    """Turn-sign handling with traffic-light precedence.

    The turn itself is a constant-radius arc tracked by the gyro-integrated
    heading change; a straight crossing exits by traveled distance instead,
    since its heading delta never crosses anything. ExecuteTurn is
    unreachable (and is vacated) while the filtered light state is red.
    """

    def __init__(self, params: VehicleParams, config: ManeuverConfig | None = None):
        self.params = params
        self.config = config or ManeuverConfig()
        self.node = IntersectionNode.LANE_FOLLOW
        self.planned: SignClass | None = None
        self.entry_heading = 0.0
        self.turn_delta = 0.0
        self.transitions: list[Transition] = []
        self.events: list[dict] = []
        self._prev_pose: VehicleState | None = None
        self._remaining: float | None = None
        self._turn_travel = 0.0
        self._first_seen: dict[object, int] = {}
        self._step_idx = 0

    def _goto(self, node: IntersectionNode, cause: str) -> None:
        self.transitions.append(Transition("intersection", self.node.value, node.value, cause))
        self.node = node

    def _choose(self, candidates: list[SignEvent]) -> SignEvent:
        # Highest confidence wins; ties go to the sign seen earliest.
        for ev in candidates:
            key = ev.sign_id if ev.sign_id is not None else ev.sign
            self._first_seen.setdefault(key, self._step_idx)
        best = max(
            candidates,
            key=lambda ev: (
                ev.confidence,
                -self._first_seen[ev.sign_id if ev.sign_id is not None else ev.sign],
            ),
        )
        if len({ev.sign for ev in candidates}) > 1:
            self.events.append(
                {
                    "type": "sign_conflict",
                    "chosen": best.sign.value,
                    "candidates": sorted(ev.sign.value for ev in candidates),
                }
            )
        return best

    def step(
        self,
        events: list[SignEvent],
        light_state: SignClass | None,
        yaw_rate_rps: float,
        pose: VehicleState,
        dt: float,
    ) -> Overlay:
        cfg = self.config
        self._step_idx += 1
        if self._prev_pose is not None:
            ds = math.hypot(pose.x_m - self._prev_pose.x_m, pose.y_m - self._prev_pose.y_m)
        else:
            ds = 0.0
        self._prev_pose = pose
        overlay = Overlay()
        turn_events = [ev for ev in events if ev.sign in TURN_SIGNS]

        if self.node == IntersectionNode.LANE_FOLLOW:
            if turn_events:
                chosen = self._choose(turn_events)
                self.planned = chosen.sign
                self._remaining = chosen.distance_m
                self._goto(IntersectionNode.SIGN_SEEN, f"sign_{chosen.sign.value}")

        elif self.node == IntersectionNode.SIGN_SEEN:
            self._goto(IntersectionNode.ALIGN, "approach")

        elif self.node == IntersectionNode.ALIGN:
            fresh = [ev for ev in turn_events if ev.sign == self.planned]
            if fresh:
                self._remaining = min(ev.distance_m for ev in fresh)
            elif self._remaining is not None:
                self._remaining -= ds
            if self._remaining is not None and self._remaining <= cfg.stop_distance_m:
                self.entry_heading = pose.theta_rad
                self._goto(IntersectionNode.WAIT_TRAFFIC_LIGHT, "at_stop_line")

        if self.node == IntersectionNode.WAIT_TRAFFIC_LIGHT:
            if light_state == SignClass.TRAFFIC_LIGHT_RED:
                overlay = Overlay(speed_mps=0.0)
            else:
                cause = "light_green" if light_state is not None else "no_light"
                self.turn_delta = 0.0
                self._turn_travel = 0.0
                self._goto(IntersectionNode.EXECUTE_TURN, cause)

        if self.node == IntersectionNode.EXECUTE_TURN:
            if light_state == SignClass.TRAFFIC_LIGHT_RED:
                # Precedence: a red light always halts the maneuver.
                self._goto(IntersectionNode.WAIT_TRAFFIC_LIGHT, "light_red")
                return Overlay(speed_mps=0.0)
            self.turn_delta += yaw_rate_rps * dt
            self._turn_travel += ds
            target = _TURN_TARGETS[self.planned or SignClass.STRAIGHT]
            if target > 0:
                steer = math.atan(self.params.wheelbase_m / cfg.turn_radius_m)
            elif target < 0:
                steer = -math.atan(self.params.wheelbase_m / cfg.turn_radius_m)
            else:
                steer = 0.0
            overlay = Overlay(speed_mps=cfg.turn_speed_mps, steer_rad=steer)
            done = (
                self._turn_travel >= cfg.cross_length_m
                if target == 0.0
                else abs(self.turn_delta) >= abs(target) - cfg.heading_tol_rad
            )
            if done:
                self.events.append(
                    {
                        "type": "turn_complete",
                        "planned": (self.planned or SignClass.STRAIGHT).value,
                        "heading_delta_rad": self.turn_delta,
                    }
                )
                self._goto(IntersectionNode.EXIT, "turn_complete")
                overlay = Overlay()

        elif self.node == IntersectionNode.EXIT:
            self.planned = None
            self._remaining = None
            self._goto(IntersectionNode.LANE_FOLLOW, "resume_lane")

        return overlay


def intersection_step(
    fsm: IntersectionFsm,
    events: list[SignEvent],
    light_state: SignClass | None,
    yaw_rate_rps: float,
    pose: VehicleState,
    dt: float,
) -> tuple[IntersectionFsm, Overlay]:
    """Functional wrapper around IntersectionFsm.step."""
    return fsm, fsm.step(events, light_state, yaw_rate_rps, pose, dt)


def sign_reactions(event: SignEvent, flags: ActuatorFlags) -> ActuatorFlags:
    """Stateless flag update for the non-maneuver signs.

    Tunnel and no-overtaking events toggle (zone end = second event);
    a pedestrian crossing raises the hazard lights. Zone tracking and the
    crossing speed cap live in SignReactions.
    """
    if event.sign == SignClass.TUNNEL:
        return replace(flags, headlights=not flags.headlights)
    if event.sign == SignClass.NO_OVERTAKING:
        return replace(flags, overtaking_allowed=not flags.overtaking_allowed)
    if event.sign == SignClass.PEDESTRIAN_CROSSING:
        return replace(flags, hazard_lights=True)
    return flags


class SignReactions:
    """Applies sign_reactions to one-shot events and tracks crossing zones."""

    def __init__(self, config: ManeuverConfig | None = None):
        self.config = config or ManeuverConfig()
        self.flags = ActuatorFlags()
        self._travel = 0.0
        self._prev_pose: VehicleState | None = None
        self._crossing_end: float | None = None

    def step(self, trigger_events: list[SignEvent], pose: VehicleState) -> tuple[ActuatorFlags, float | None]:
        """Returns (flags, speed cap or None) for this step."""
        if self._prev_pose is not None:
            self._travel += math.hypot(
                pose.x_m - self._prev_pose.x_m, pose.y_m - self._prev_pose.y_m
            )
        self._prev_pose = pose
        for ev in trigger_events:
            self.flags = sign_reactions(ev, self.flags)
            if ev.sign == SignClass.PEDESTRIAN_CROSSING:
                self._crossing_end = self._travel + ev.distance_m + self.config.crossing_zone_m
        in_zone = self._crossing_end is not None and self._travel < self._crossing_end
        if not in_zone:
            self._crossing_end = None
            if self.flags.hazard_lights:
                self.flags = replace(self.flags, hazard_lights=False)
        cap = self.config.crossing_speed_mps if in_zone else None
        return self.flags, cap
