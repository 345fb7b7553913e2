"""Closed-loop scenario runner.

Per step: simulate sensors from ground truth, run the lane pipeline,
controller and FSM overlays, clamp, step the plant, dead-reckon, and fold
range readings into the occupancy grid. Ground truth is read only by the
sensor simulators, the collision/road checks and the logger. Runs are
fully deterministic for a given (scenario, seed, controller, gains).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import fsm as fsm_mod
from . import lane as lane_mod
from .control import LateralController, PathError, SpeedPolicy, speed_command
from .fsm import (
    IntersectionFsm,
    ManeuverConfig,
    Overlay,
    PARKING_HAZARD_NODES,
    ParkingFsm,
    SignClass,
    SignReactions,
    StatFilter,
    Transition,
)
from .kinematics import ControlInput, GyroSample, VehicleState, clamp_input, localize, normalize_angle, step as plant_step
from .mapping import GridMap, integrate_reading, nearest_obstacle
from .ranging import CameraIntrinsics, RangeCorrection
from .scenario import GainSet, Scenario, SignSpec, merge_gains
from .sensors import (
    CameraConfig,
    default_range_mounts,
    sample_lane_points,
    simulate_detections,
    simulate_range,
)

CSV_COLUMNS = (
    "step",
    "t",
    "x_true",
    "y_true",
    "theta_true",
    "x_est",
    "y_est",
    "theta_est",
    "ce",
    "he",
    "steer_cmd",
    "speed_cmd",
    "controller",
    "parking_node",
    "intersection_node",
    "hazard",
    "headlights",
    "nearest_obstacle_m",
)


@dataclass(frozen=True)
class StepRecord:
    step: int
    t: float
    x_true: float
    y_true: float
    theta_true: float
    x_est: float
    y_est: float
    theta_est: float
    ce: float
    he: float
    steer_cmd: float
    speed_cmd: float
    controller: str
    parking_node: str
    intersection_node: str
    hazard: bool
    headlights: bool
    nearest_obstacle_m: float | None


@dataclass
class RunLog:
    scenario_name: str
    controller: str
    dt: float
    seed: int
    records: list[StepRecord]
    transitions: list[tuple[int, Transition]]
    events: list[dict]
    filtered_lights: list[str | None]
    outcome: str
    reason: str
    final_map: GridMap

    @property
    def completed(self) -> bool:
        return self.outcome == "completed"


def footprint_corners(pose: VehicleState, params) -> np.ndarray:
    """Body rectangle corners for collision checks (rear-axle referenced)."""
    nose = params.overall_length_m - params.rear_overhang_m
    tail = -params.rear_overhang_m
    half_w = params.overall_width_m / 2.0
    c, s = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
    local = np.array([[nose, half_w], [nose, -half_w], [tail, -half_w], [tail, half_w]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([pose.x_m, pose.y_m])


def _compose_speed(base: float, fsm_speed: float | None, cap: float | None) -> float:
    """Command arbitration for speed.

    An FSM script replaces the base (curvature/obstacle) command — its own
    collision stop already zeroes it when anything is under the stop
    distance. A crossing speed cap bounds the magnitude of whatever won.
    """
    speed = fsm_speed if fsm_speed is not None else base
    if cap is not None and abs(speed) > cap:
        speed = math.copysign(cap, speed)
    return speed


def simulate(
    scenario: Scenario,
    controller: str = "stanley",
    gains: GainSet | dict | None = None,
    noise=None,
    dt: float | None = None,
    duration_s: float | None = None,
    seed: int | None = None,
    speed: SpeedPolicy | None = None,
    camera: CameraConfig | None = None,
    fusion_weight: float = 0.98,
) -> RunLog:
    """Run one scenario closed-loop and return the full log."""
    dt = dt if dt is not None else scenario.dt
    duration_s = duration_s if duration_s is not None else scenario.duration_s
    seed = seed if seed is not None else scenario.seed
    noise = noise if noise is not None else scenario.noise
    policy = speed or scenario.speed
    cam = camera or CameraConfig()
    params = scenario.vehicle
    if isinstance(gains, dict):
        gain_set = merge_gains(scenario.gains, gains)
    else:
        gain_set = gains or scenario.gains

    rng = np.random.Generator(np.random.PCG64(seed))
    intrinsics = CameraIntrinsics()
    correction = RangeCorrection()
    mounts = default_range_mounts(params)
    maneuvers = scenario.maneuvers

    lateral = LateralController(
        controller,
        params.wheelbase_m,
        stanley=gain_set.stanley,
        pid=gain_set.pid,
        pure_pursuit=gain_set.pure_pursuit,
    )
    parking = ParkingFsm(params, maneuvers)
    intersection = IntersectionFsm(params, maneuvers)
    reactions = SignReactions(maneuvers)
    filters: dict[int, StatFilter] = {
        p.sign_id: StatFilter(maneuvers.filter_window, maneuvers.filter_k_sigma)
        for p in scenario.sign_placements
    }
    light_ids = {
        p.sign_id for p in scenario.sign_placements if not isinstance(p.spec, SignSpec)
    }
    triggered: set[int] = set()

    true_pose = scenario.start_state()
    est_pose = true_pose
    grid = GridMap.centered(true_pose.x_m, true_pose.y_m)
    gyro_bias = noise.gyro_bias_rps

    n_steps = int(round(duration_s / dt))
    records: list[StepRecord] = []
    transitions: list[tuple[int, Transition]] = []
    events: list[dict] = []
    filtered_lights: list[str | None] = []
    outcome, reason = "completed", "duration elapsed"

    mid_state = lane_mod.MiddleLineState()
    err = PathError(0.0, 0.0)
    curvature = 0.0
    light_state: SignClass | None = None
    last_speed_cmd = 0.0
    last_gyro_rate = 0.0

    for k in range(n_steps):
        t = k * dt

        # --- sensors (ground truth in, measurements out) -------------------
        lane_pts = sample_lane_points(scenario.road, true_pose, cam, noise, rng)
        readings = {
            m.name: simulate_range(scenario.obstacles, true_pose, m, noise, rng) for m in mounts
        }
        ranges = {name: r.measured_m for name, r in readings.items()}
        detections = simulate_detections(
            scenario.sign_placements, t, true_pose, intrinsics, cam, correction, noise, rng
        )

        # --- std-dev filtering of the perception streams -------------------
        filtered_events: list[fsm_mod.SignEvent] = []
        trigger_events: list[fsm_mod.SignEvent] = []
        for event, _det in detections:
            accepted, mean = filters[event.sign_id].update(event.distance_m)
            if not accepted:
                continue
            smoothed = replace(event, distance_m=max(mean, 0.0))
            filtered_events.append(smoothed)
            if event.sign_id in light_ids:
                light_state = event.sign
            elif (
                event.sign_id not in triggered
                and smoothed.distance_m <= maneuvers.trigger_distance_m
            ):
                triggered.add(event.sign_id)
                trigger_events.append(smoothed)
                events.append(
                    {
                        "step": k,
                        "type": "sign_trigger",
                        "sign": event.sign.value,
                        "distance_m": smoothed.distance_m,
                    }
                )

        # --- lane geometry --------------------------------------------------
        left_m, right_m = lane_mod.to_bev(lane_pts, cam.bev)
        left_fit = lane_mod.fit_lane(
            lane_mod.filter_outliers(left_m, cam.lane_outlier_k), "left"
        )
        right_fit = lane_mod.fit_lane(
            lane_mod.filter_outliers(right_m, cam.lane_outlier_k), "right"
        )
        mid_state = lane_mod.middle_line(
            left_fit, right_fit, mid_state, scenario.lane_width_m, cam.hold_limit_frames
        )
        if mid_state.current is not None:
            # Single sign flip: the fit describes the line in the vehicle
            # frame; controllers want the vehicle relative to the line.
            err = lane_mod.path_error(mid_state.current).negated()
            curvature = lane_mod.path_curvature(mid_state.current)

        # --- base command ---------------------------------------------------
        nearest = nearest_obstacle(grid, est_pose)
        base_speed = speed_command(policy, curvature, nearest)
        steer = lateral.steer(err, last_speed_cmd, dt)

        # --- decision layer -------------------------------------------------
        park_overlay, park_hazard = parking.step(filtered_events, ranges, est_pose, dt)
        inter_overlay = intersection.step(
            filtered_events, light_state, last_gyro_rate, est_pose, dt
        )
        flags, crossing_cap = reactions.step(trigger_events, est_pose)

        fsm_speed = (
            park_overlay.speed_mps
            if park_overlay.speed_mps is not None
            else inter_overlay.speed_mps
        )
        speed_cmd = _compose_speed(base_speed, fsm_speed, crossing_cap)
        if park_overlay.steer_rad is not None:
            steer = park_overlay.steer_rad
        elif inter_overlay.steer_rad is not None:
            steer = inter_overlay.steer_rad
        command = clamp_input(ControlInput(speed_cmd, steer), params)

        # --- bookkeeping ------------------------------------------------------
        records.append(
            StepRecord(
                step=k,
                t=t,
                x_true=true_pose.x_m,
                y_true=true_pose.y_m,
                theta_true=true_pose.theta_rad,
                x_est=est_pose.x_m,
                y_est=est_pose.y_m,
                theta_est=est_pose.theta_rad,
                ce=err.cross_track_m,
                he=err.heading_err_rad,
                steer_cmd=command.steer_rad,
                speed_cmd=command.speed_mps,
                controller=controller,
                parking_node=parking.node.value,
                intersection_node=intersection.node.value,
                hazard=park_hazard or flags.hazard_lights,
                headlights=flags.headlights,
                nearest_obstacle_m=nearest,
            )
        )
        filtered_lights.append(light_state.value if light_state is not None else None)
        for tr in parking.transitions + intersection.transitions:
            transitions.append((k, tr))
        parking.transitions.clear()
        intersection.transitions.clear()
        for ev in parking.events + intersection.events:
            events.append({"step": k, **ev})
        parking.events.clear()
        intersection.events.clear()

        # --- map, plant, localization ----------------------------------------
        for reading in readings.values():
            integrate_reading(grid, est_pose, reading)
        prev_theta = true_pose.theta_rad
        true_pose = plant_step(true_pose, command, params, dt)
        true_rate = normalize_angle(true_pose.theta_rad - prev_theta) / dt
        gyro_rate = true_rate + gyro_bias
        if noise.gyro_sigma_rps > 0:
            gyro_rate += rng.normal(0.0, noise.gyro_sigma_rps)
        est_pose = localize(
            est_pose, command, GyroSample(gyro_rate), params, dt, fusion_weight
        )
        last_gyro_rate = gyro_rate
        last_speed_cmd = command.speed_mps

        # --- halting checks ---------------------------------------------------
        hit = scenario.obstacles.any_overlap(footprint_corners(true_pose, params))
        if hit is not None:
            outcome, reason = "collision", f"footprint hit obstacle {hit} at step {k}"
            events.append({"step": k, "type": "collision", "obstacle": hit})
            break
        maneuvering = parking.node in PARKING_HAZARD_NODES or intersection.node.value not in (
            "lane_follow",
        )
        _, offset_right, _, _ = scenario.road.project(true_pose.x_m, true_pose.y_m)
        limit = scenario.lane_width_m / 2.0 + scenario.road_shoulder_m
        if not maneuvering and abs(offset_right) > limit:
            outcome, reason = "road_exit", f"left the road at step {k} (offset {offset_right:.3f} m)"
            events.append({"step": k, "type": "road_exit", "offset_m": offset_right})
            break

    return RunLog(
        scenario_name=scenario.name,
        controller=controller,
        dt=dt,
        seed=seed,
        records=records,
        transitions=transitions,
        events=events,
        filtered_lights=filtered_lights,
        outcome=outcome,
        reason=reason,
        final_map=grid,
    )
