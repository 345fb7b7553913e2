"""Lateral steering laws and the speed policy.

Sign convention: positive cross-track error means the vehicle sits to the
right of the middle line, positive steer turns left. All three laws then
produce corrective steering as written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

CONTROLLER_NAMES = ("stanley", "pid", "pure-pursuit")


@dataclass(frozen=True)
class PathError:
    """Cross-track error CE (m) and heading error HE (rad) vs the middle line."""

    cross_track_m: float
    heading_err_rad: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cross_track_m) and math.isfinite(self.heading_err_rad)):
            raise ValueError("path error components must be finite")

    def negated(self) -> "PathError":
        return PathError(-self.cross_track_m, -self.heading_err_rad)


@dataclass(frozen=True)
class StanleyGains:
    k_he: float = 1.0
    k_ce: float = 2.5
    k_s: float = 0.1

    def __post_init__(self) -> None:
        if min(self.k_he, self.k_ce, self.k_s) < 0:
            raise ValueError("Stanley gains must be >= 0")
        if self.k_he == self.k_ce == self.k_s == 0:
            raise ValueError("Stanley gains must not all be zero")


@dataclass(frozen=True)
class PidGains:
    k_p: float = 2.0
    k_i: float = 0.05
    k_d: float = 1.5
    integral_limit: float = 1.0

    def __post_init__(self) -> None:
        if min(self.k_p, self.k_i, self.k_d) < 0:
            raise ValueError("PID gains must be >= 0")
        if not self.integral_limit > 0:
            raise ValueError("integral_limit must be > 0")


@dataclass(frozen=True)
class PurePursuitGains:
    k_pp: float = 1.0

    def __post_init__(self) -> None:
        if not self.k_pp > 0:
            raise ValueError("k_pp must be > 0")


@dataclass(frozen=True)
class SpeedPolicy:
    """Cruise target with P-type curvature slowdown and obstacle clearance."""

    cruise_mps: float = 0.5
    curvature_gain: float = 0.3
    obstacle_gain: float = 1.5
    obstacle_stop_m: float = 0.5

    def __post_init__(self) -> None:
        if not self.cruise_mps > 0:
            raise ValueError("cruise_mps must be > 0")
        if min(self.curvature_gain, self.obstacle_gain, self.obstacle_stop_m) < 0:
            raise ValueError("speed policy gains must be >= 0")


def stanley_steer(err: PathError, v_mps: float, gains: StanleyGains) -> float:
    """steer = k_he*HE + atan(k_ce*CE / (v + k_s))."""
    if v_mps < 0:
        raise ValueError("v_mps must be >= 0")
    denom = v_mps + gains.k_s
    if denom <= 0:
        raise ValueError("v + k_s must be > 0")
    return gains.k_he * err.heading_err_rad + math.atan(gains.k_ce * err.cross_track_m / denom)


def pid_steer(err: PathError, integral_ce: float, gains: PidGains) -> float:
    """steer = k_p*CE + k_d*HE + k_i*integral(CE).

    The derivative-slot term acts on the heading error directly, not on
    d(CE)/dt.
    """
    return gains.k_p * err.cross_track_m + gains.k_d * err.heading_err_rad + gains.k_i * integral_ce


def update_integral(integral_ce: float, ce: float, dt: float, gains: PidGains) -> float:
    """Accumulate CE*dt, saturated to +/- integral_limit."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    total = integral_ce + ce * dt
    return min(max(total, -gains.integral_limit), gains.integral_limit)


def pure_pursuit_steer(
    cross_track_m: float,
    wheelbase_m: float,
    v_mps: float,
    gains: PurePursuitGains,
) -> float:
    """steer = atan(2*CE*wheelbase / (k_pp * v)); rejects v <= 0."""
    if not v_mps > 0:
        raise ValueError("pure pursuit requires v > 0; hold the last command at standstill")
    return math.atan(2.0 * cross_track_m * wheelbase_m / (gains.k_pp * v_mps))


def speed_command(
    policy: SpeedPolicy,
    path_curvature_per_m: float,
    nearest_obstacle_m: float | None = None,
) -> float:
    """Commanded speed: min of the curvature and obstacle branches.

    Curvature branch: max(0, cruise - curvature_gain*kappa). Obstacle
    branch (only with a reading): obstacle_gain*(d - obstacle_stop_m)
    clamped to [0, cruise]; it dominates whenever it is lower.
    """
    if path_curvature_per_m < 0:
        raise ValueError("curvature must be >= 0")
    v = max(0.0, policy.cruise_mps - policy.curvature_gain * path_curvature_per_m)
    if nearest_obstacle_m is not None:
        if nearest_obstacle_m < 0:
            raise ValueError("obstacle distance must be >= 0")
        v_obs = policy.obstacle_gain * (nearest_obstacle_m - policy.obstacle_stop_m)
        v_obs = min(max(v_obs, 0.0), policy.cruise_mps)
        v = min(v, v_obs)
    return v


class LateralController:
    """Steering-law dispatch by name, owning the little state the laws need.

    The PID integral is explicit state; pure pursuit is bypassed below
    0.05 m/s (the law divides by speed) and the last command is held.
    For pure pursuit the error is projected to the lookahead point
    Ld = k_pp*v: the law consumes CE + Ld*tan(HE), which is the lateral
    offset of the path point the controller is actually chasing.
    """

    STANDSTILL_MPS = 0.05

    def __init__(
        self,
        name: str,
        wheelbase_m: float,
        stanley: StanleyGains | None = None,
        pid: PidGains | None = None,
        pure_pursuit: PurePursuitGains | None = None,
    ):
        if name not in CONTROLLER_NAMES:
            raise ValueError(f"unknown controller {name!r}; expected one of {CONTROLLER_NAMES}")
        self.name = name
        self.wheelbase_m = wheelbase_m
        self.stanley = stanley or StanleyGains()
        self.pid = pid or PidGains()
        self.pure_pursuit = pure_pursuit or PurePursuitGains()
        self.integral_ce = 0.0
        self.last_steer = 0.0

    def steer(self, err: PathError, v_mps: float, dt: float) -> float:
        if self.name == "stanley":
            out = stanley_steer(err, max(v_mps, 0.0), self.stanley)
        elif self.name == "pid":
            self.integral_ce = update_integral(self.integral_ce, err.cross_track_m, dt, self.pid)
            out = pid_steer(err, self.integral_ce, self.pid)
        else:
            if v_mps < self.STANDSTILL_MPS:
                return self.last_steer
            lookahead_m = self.pure_pursuit.k_pp * v_mps
            ce_ahead = err.cross_track_m + lookahead_m * math.tan(err.heading_err_rad)
            out = pure_pursuit_steer(ce_ahead, self.wheelbase_m, v_mps, self.pure_pursuit)
        self.last_steer = out
        return out

    def reset(self) -> None:
        self.integral_ce = 0.0
        self.last_steer = 0.0
