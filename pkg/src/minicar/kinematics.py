"""Bicycle-model plant integration and dead-reckoning localization.

World frame: x forward at start, y to the left, heading theta measured
counter-clockwise from +x. The pose reference point is the rear axle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def normalize_angle(angle: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.remainder(angle, math.tau)
    if a <= -math.pi:
        a += math.tau
    return a


def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and actuation limits of the car (rear-axle referenced)."""

    wheelbase_m: float = 0.26
    max_speed_mps: float = 0.9
    max_steer_rad: float = 0.52
    overall_length_m: float = 0.397
    overall_width_m: float = 0.241

    def __post_init__(self) -> None:
        if not self.wheelbase_m > 0:
            raise ValueError("wheelbase_m must be > 0")
        if not self.max_speed_mps > 0:
            raise ValueError("max_speed_mps must be > 0")
        if not 0 < self.max_steer_rad < math.pi / 2:
            raise ValueError("max_steer_rad must be in (0, pi/2)")
        if not self.wheelbase_m < self.overall_length_m:
            raise ValueError("wheelbase_m must be < overall_length_m")
        if not self.overall_width_m > 0:
            raise ValueError("overall_width_m must be > 0")

    @property
    def rear_overhang_m(self) -> float:
        """Distance from the rear axle back to the body's rear face."""
        return (self.overall_length_m - self.wheelbase_m) / 2.0


@dataclass(frozen=True)
class VehicleState:
    """Pose (x, y, theta) of the rear axle in the world frame."""

    x_m: float
    y_m: float
    theta_rad: float

    def __post_init__(self) -> None:
        _require_finite(x_m=self.x_m, y_m=self.y_m, theta_rad=self.theta_rad)
        object.__setattr__(self, "theta_rad", normalize_angle(self.theta_rad))


@dataclass(frozen=True)
class ControlInput:
    """Commanded forward speed v and steering angle delta."""

    speed_mps: float
    steer_rad: float

    def __post_init__(self) -> None:
        _require_finite(speed_mps=self.speed_mps, steer_rad=self.steer_rad)


@dataclass(frozen=True)
class GyroSample:
    """One yaw-rate reading, optionally with an absolute heading.

    Non-finite samples are allowed here; localize() falls back to the
    kinematic heading when it sees one.
    """

    yaw_rate_rps: float
    heading_rad: float | None = None


def step(
    state: VehicleState,
    control: ControlInput,
    params: VehicleParams,
    dt: float,
) -> VehicleState:
    """Advance the ground-truth pose one forward-Euler step.

    x += v*cos(theta)*dt, y += v*sin(theta)*dt,
    theta += v*tan(delta)/wheelbase*dt, then theta is re-normalized.
    The caller is expected to have clamped the input already.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be finite and > 0, got {dt!r}")
    if abs(control.steer_rad) >= math.pi / 2:
        raise ValueError("steer_rad must satisfy |steer| < pi/2")
    v = control.speed_mps
    theta = state.theta_rad
    x = state.x_m + v * math.cos(theta) * dt
    y = state.y_m + v * math.sin(theta) * dt
    theta_new = theta + v * math.tan(control.steer_rad) / params.wheelbase_m * dt
    return VehicleState(x, y, normalize_angle(theta_new))


def turning_radius(steer_rad: float, params: VehicleParams) -> float | None:
    """Steady-state turn radius R = wheelbase / |tan(steer)|.

    Returns None for steer == 0 (straight line), never a numeric infinity.
    """
    if not math.isfinite(steer_rad):
        raise ValueError("steer_rad must be finite")
    if abs(steer_rad) >= math.pi / 2:
        raise ValueError("steer_rad must satisfy |steer| < pi/2")
    if steer_rad == 0.0:
        return None
    return params.wheelbase_m / abs(math.tan(steer_rad))


def clamp_input(raw: ControlInput, params: VehicleParams) -> ControlInput:
    """Saturate speed and steering symmetrically to the vehicle limits."""
    v = min(max(raw.speed_mps, -params.max_speed_mps), params.max_speed_mps)
    d = min(max(raw.steer_rad, -params.max_steer_rad), params.max_steer_rad)
    return ControlInput(v, d)


def localize(
    prev_estimate: VehicleState,
    control: ControlInput,
    gyro: GyroSample,
    params: VehicleParams,
    dt: float,
    fusion_weight: float = 0.98,
) -> VehicleState:
    """Dead-reckon one step, blending gyro and kinematic headings.

    Position integrates with the previous heading estimate. The new heading
    is a complementary blend on the circle: the kinematic heading plus
    fusion_weight times the shortest angular difference to the
    gyro-derived heading. A non-finite gyro sample falls back to the pure
    kinematic heading for this step.
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be finite and > 0, got {dt!r}")
    if not 0.0 <= fusion_weight <= 1.0:
        raise ValueError("fusion_weight must be in [0, 1]")

    v = control.speed_mps
    theta_prev = prev_estimate.theta_rad
    x = prev_estimate.x_m + v * math.cos(theta_prev) * dt
    y = prev_estimate.y_m + v * math.sin(theta_prev) * dt

    theta_kin = theta_prev + v * math.tan(control.steer_rad) / params.wheelbase_m * dt
    if gyro.heading_rad is not None and math.isfinite(gyro.heading_rad):
        theta_gyro = gyro.heading_rad
    elif math.isfinite(gyro.yaw_rate_rps):
        theta_gyro = theta_prev + gyro.yaw_rate_rps * dt
    else:
        theta_gyro = theta_kin
    diff = math.remainder(theta_gyro - theta_kin, math.tau)
    theta = normalize_angle(theta_kin + fusion_weight * diff)
    return VehicleState(x, y, theta)
