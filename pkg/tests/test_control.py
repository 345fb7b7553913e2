import math

import pytest
from hypothesis import given, strategies as st

from minicar.control import (
    LateralController,
    PathError,
    PidGains,
    PurePursuitGains,
    SpeedPolicy,
    StanleyGains,
    pid_steer,
    pure_pursuit_steer,
    speed_command,
    stanley_steer,
    update_integral,
)
from minicar.kinematics import ControlInput, VehicleParams, VehicleState, clamp_input, step


def test_stanley_zero_error():
    assert stanley_steer(PathError(0.0, 0.0), 0.5, StanleyGains()) == 0.0


def test_stanley_spot_check():
    out = stanley_steer(PathError(0.2, 0.1), 1.0, StanleyGains(k_he=1.0, k_ce=1.0, k_s=0.0))
    assert out == pytest.approx(0.1 + math.atan(0.2), abs=1e-12)


def test_stanley_cross_track_odd():
    gains = StanleyGains()
    plus = stanley_steer(PathError(0.3, 0.0), 0.5, gains)
    minus = stanley_steer(PathError(-0.3, 0.0), 0.5, gains)
    assert minus == -plus


def test_stanley_rejects_zero_denominator():
    with pytest.raises(ValueError):
        stanley_steer(PathError(0.1, 0.0), 0.0, StanleyGains(k_s=0.0))


def test_stanley_monotone_in_cross_track():
    gains = StanleyGains()
    mags = [
        abs(stanley_steer(PathError(ce, 0.05), 0.5, gains))
        for ce in [0.0, 0.1, 0.2, 0.4, 0.8, 1.6]
    ]
    assert all(b >= a for a, b in zip(mags, mags[1:]))


def test_pid_zero_error():
    assert pid_steer(PathError(0.0, 0.0), 0.0, PidGains()) == 0.0


def test_pid_spot_check():
    out = pid_steer(PathError(0.2, 0.1), 0.0, PidGains(k_p=1.0, k_i=0.0, k_d=0.5))
    assert out == pytest.approx(0.25, abs=1e-12)


def test_pid_integral_term():
    out = pid_steer(PathError(0.0, 0.0), 1.0, PidGains(k_p=0.0, k_i=0.1, k_d=0.0))
    assert out == pytest.approx(0.1, abs=1e-12)


def test_pure_pursuit_zero_error():
    assert pure_pursuit_steer(0.0, 0.26, 0.5, PurePursuitGains()) == 0.0


def test_pure_pursuit_spot_check():
    out = pure_pursuit_steer(0.1, 0.26, 1.0, PurePursuitGains(k_pp=1.0))
    assert out == pytest.approx(math.atan(0.052), abs=1e-12)


def test_pure_pursuit_speed_halves_argument():
    g = PurePursuitGains()
    assert math.tan(pure_pursuit_steer(0.1, 0.26, 2.0, g)) == pytest.approx(
        math.tan(pure_pursuit_steer(0.1, 0.26, 1.0, g)) / 2.0, rel=1e-12
    )


def test_pure_pursuit_rejects_standstill():
    with pytest.raises(ValueError):
        pure_pursuit_steer(0.1, 0.26, 0.0, PurePursuitGains())


def test_pure_pursuit_magnitude_nonincreasing_in_speed():
    g = PurePursuitGains()
    mags = [abs(pure_pursuit_steer(0.2, 0.26, v, g)) for v in [0.1, 0.3, 0.5, 0.9, 2.0]]
    assert all(b <= a for a, b in zip(mags, mags[1:]))


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_laws_jointly_odd(ce, he):
    err = PathError(ce, he)
    neg = err.negated()
    assert stanley_steer(neg, 0.5, StanleyGains()) == -stanley_steer(err, 0.5, StanleyGains())
    assert pid_steer(neg, 0.0, PidGains()) == -pid_steer(err, 0.0, PidGains())
    assert pure_pursuit_steer(-ce, 0.26, 0.5, PurePursuitGains()) == -pure_pursuit_steer(
        ce, 0.26, 0.5, PurePursuitGains()
    )


def test_update_integral_single_rectangle():
    assert update_integral(0.0, 0.5, 0.1, PidGains()) == pytest.approx(0.05, abs=1e-15)


def test_update_integral_saturates():
    g = PidGains(integral_limit=1.0)
    assert update_integral(1.0, 5.0, 1.0, g) == 1.0
    assert update_integral(-1.0, -5.0, 1.0, g) == -1.0


def test_update_integral_alternating_cancels():
    # Telescoping sum oracle: equal-magnitude alternating contributions.
    g = PidGains(integral_limit=10.0)
    total = 0.0
    for i in range(20):
        total = update_integral(total, 0.3 if i % 2 == 0 else -0.3, 0.1, g)
    assert total == pytest.approx(0.0, abs=1e-15)


@given(st.lists(st.floats(-2.0, 2.0), min_size=1, max_size=60))
def test_integral_never_exceeds_limit(samples):
    g = PidGains(integral_limit=0.7)
    total = 0.0
    for ce in samples:
        total = update_integral(total, ce, 0.05, g)
        assert abs(total) <= 0.7


def test_speed_command_cruise_when_clear():
    policy = SpeedPolicy()
    assert speed_command(policy, 0.0, None) == policy.cruise_mps


def test_speed_command_curvature_slowdown():
    out = speed_command(SpeedPolicy(cruise_mps=0.9, curvature_gain=0.5), 1.0, None)
    assert out == pytest.approx(0.4, abs=1e-12)


def test_speed_command_obstacle_at_stop_distance():
    policy = SpeedPolicy(cruise_mps=0.9, curvature_gain=0.0, obstacle_stop_m=0.5)
    assert speed_command(policy, 0.0, 0.5) == 0.0
    # Obstacle dominates curvature branch whenever lower.
    assert speed_command(SpeedPolicy(obstacle_stop_m=0.5), 0.1, 0.5) == 0.0


def test_speed_command_obstacle_branch_clamped_to_cruise():
    policy = SpeedPolicy(cruise_mps=0.5, obstacle_gain=1.5, obstacle_stop_m=0.5)
    assert speed_command(policy, 0.0, 10.0) == 0.5


def _closed_loop_final_ce(controller_name: str) -> None:
    """Straight road along +x at y=0; vehicle starts 0.5 m right of it."""
    params = VehicleParams()
    ctrl = LateralController(controller_name, params.wheelbase_m)
    dt, v = 0.01, 0.5
    state = VehicleState(0.0, -0.5, 0.0)
    converged_at = None
    for k in range(int(12.0 / dt)):
        err = PathError(-state.y_m, -state.theta_rad)
        steer = ctrl.steer(err, v, dt)
        cmd = clamp_input(ControlInput(v, steer), params)
        state = step(state, cmd, params, dt)
        ce = abs(state.y_m)
        t = (k + 1) * dt
        if converged_at is None and ce < 0.02:
            converged_at = t
        if converged_at is not None and ce >= 0.02:
            converged_at = None  # left the band again
    assert converged_at is not None and converged_at <= 10.0, (
        f"{controller_name} did not settle: converged_at={converged_at}"
    )


@pytest.mark.parametrize("name", ["stanley", "pid", "pure-pursuit"])
def test_closed_loop_convergence_straight_road(name):
    _closed_loop_final_ce(name)


def test_lateral_controller_holds_last_steer_at_standstill():
    ctrl = LateralController("pure-pursuit", 0.26)
    moving = ctrl.steer(PathError(0.2, 0.0), 0.5, 0.01)
    held = ctrl.steer(PathError(-0.4, 0.1), 0.01, 0.01)
    assert held == moving


def test_lateral_controller_unknown_name():
    with pytest.raises(ValueError):
        LateralController("mpc", 0.26)


def test_gain_invariants():
    with pytest.raises(ValueError):
        StanleyGains(k_he=0.0, k_ce=0.0, k_s=0.0)
    with pytest.raises(ValueError):
        PidGains(integral_limit=0.0)
    with pytest.raises(ValueError):
        PurePursuitGains(k_pp=0.0)
    with pytest.raises(ValueError):
        SpeedPolicy(cruise_mps=0.0)
