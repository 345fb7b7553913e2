import math

import pytest
from hypothesis import given, strategies as st

from minicar.kinematics import (
    ControlInput,
    GyroSample,
    VehicleParams,
    VehicleState,
    clamp_input,
    localize,
    normalize_angle,
    step,
    turning_radius,
)

PARAMS = VehicleParams()


def test_step_zero_speed_is_identity():
    s = VehicleState(0.0, 0.0, 0.0)
    out = step(s, ControlInput(0.0, 0.3), PARAMS, 0.1)
    assert (out.x_m, out.y_m, out.theta_rad) == (0.0, 0.0, 0.0)


def test_step_straight_line():
    out = step(VehicleState(0.0, 0.0, 0.0), ControlInput(1.0, 0.0), PARAMS, 0.1)
    assert out.x_m == pytest.approx(0.1, abs=1e-15)
    assert out.y_m == 0.0
    assert out.theta_rad == 0.0


def test_step_heading_rate_matches_direct_evaluation():
    params = VehicleParams(wheelbase_m=0.26)
    out = step(VehicleState(0.0, 0.0, 0.0), ControlInput(1.0, math.pi / 4), params, 0.01)
    expected = math.tan(math.pi / 4) / 0.26 * 0.01
    assert out.theta_rad == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("bad_dt", [0.0, -0.1, math.nan, math.inf])
def test_step_rejects_bad_dt(bad_dt):
    with pytest.raises(ValueError):
        step(VehicleState(0, 0, 0), ControlInput(1.0, 0.0), PARAMS, bad_dt)


def test_step_rejects_nonfinite_input():
    with pytest.raises(ValueError):
        ControlInput(math.nan, 0.0)
    with pytest.raises(ValueError):
        VehicleState(math.inf, 0.0, 0.0)


def test_turning_radius_unit_tangent():
    assert turning_radius(math.pi / 4, VehicleParams(wheelbase_m=0.26)) == pytest.approx(0.26)


def test_turning_radius_straight_sentinel():
    assert turning_radius(0.0, PARAMS) is None


def test_turning_radius_direct_evaluation():
    assert turning_radius(0.2, VehicleParams(wheelbase_m=0.26)) == pytest.approx(
        0.26 / math.tan(0.2), rel=1e-12
    )


def test_clamp_speed_to_table_limit():
    # Physical cap: 0.9 m/s.
    out = clamp_input(ControlInput(2.0, 0.0), PARAMS)
    assert out.speed_mps == 0.9


def test_clamp_within_limits_unchanged_and_idempotent():
    raw = ControlInput(0.4, -0.2)
    once = clamp_input(raw, PARAMS)
    assert once == raw
    assert clamp_input(once, PARAMS) == once


def test_clamp_symmetric_steer():
    out = clamp_input(ControlInput(0.0, -1.0), VehicleParams(max_steer_rad=0.52))
    assert out.steer_rad == -0.52


def test_straight_line_exactness_bitwise():
    # Dyadic v*dt so iterated addition equals the product bitwise.
    dt = 1.0 / 64.0
    n = 1000
    s = VehicleState(0.0, 0.0, 0.0)
    u = ControlInput(1.0, 0.0)
    for _ in range(n):
        s = step(s, u, PARAMS, dt)
    assert s.y_m == 0.0
    assert s.theta_rad == 0.0
    assert s.x_m == n * 1.0 * dt


def test_straight_line_no_drift_any_dt():
    s = VehicleState(0.0, 0.0, 0.0)
    u = ControlInput(0.5, 0.0)
    for _ in range(500):
        s = step(s, u, PARAMS, 0.01)
    assert s.y_m == 0.0
    assert s.theta_rad == 0.0


def test_circle_property():
    v, steer, dt = 0.5, 0.3, 1e-3
    params = VehicleParams(wheelbase_m=0.26)
    radius = params.wheelbase_m / math.tan(steer)
    s = VehicleState(0.0, 0.0, 0.0)
    center = (s.x_m - radius * math.sin(s.theta_rad), s.y_m + radius * math.cos(s.theta_rad))
    period = 2 * math.pi * radius / v
    worst = 0.0
    for _ in range(int(period / dt) + 1):
        s = step(s, ControlInput(v, steer), params, dt)
        r = math.hypot(s.x_m - center[0], s.y_m - center[1])
        worst = max(worst, abs(r - radius))
    assert worst <= 0.01 * radius


def test_timestep_refinement_first_order():
    v, steer = 0.5, 0.3
    params = VehicleParams(wheelbase_m=0.26)
    radius = params.wheelbase_m / math.tan(steer)
    omega = v / radius
    horizon = (math.pi / 2) / omega  # quarter revolution

    def terminal_error(dt: float) -> float:
        s = VehicleState(0.0, 0.0, 0.0)
        n = int(round(horizon / dt))
        for _ in range(n):
            s = step(s, ControlInput(v, steer), params, dt)
        t = n * dt
        exact_x = radius * math.sin(omega * t)
        exact_y = radius * (1 - math.cos(omega * t))
        return math.hypot(s.x_m - exact_x, s.y_m - exact_y)

    assert terminal_error(0.002) / terminal_error(0.001) >= 1.8


@given(st.floats(-50.0, 50.0), st.floats(-0.5, 0.5), st.floats(0.01, 0.9))
def test_heading_stays_normalized(theta0, steer, v):
    s = VehicleState(0.0, 0.0, theta0)
    for _ in range(5):
        s = step(s, ControlInput(v, steer), PARAMS, 0.5)
        assert -math.pi < s.theta_rad <= math.pi


@given(st.floats(-10.0, 10.0))
def test_normalize_angle_range(a):
    out = normalize_angle(a)
    assert -math.pi < out <= math.pi


def test_localize_weight_zero_equals_step():
    s = VehicleState(0.2, -0.1, 0.3)
    u = ControlInput(0.5, 0.1)
    gyro = GyroSample(99.0)  # should be ignored entirely
    assert localize(s, u, gyro, PARAMS, 0.01, fusion_weight=0.0) == step(s, u, PARAMS, 0.01)


@pytest.mark.parametrize("weight", [0.0, 0.25, 0.5, 0.75, 0.98, 1.0])
def test_localize_perfect_sensors_equals_step(weight):
    s = VehicleState(0.0, 0.0, 0.1)
    u = ControlInput(0.5, 0.2)
    exact_rate = u.speed_mps * math.tan(u.steer_rad) / PARAMS.wheelbase_m
    out = localize(s, u, GyroSample(exact_rate), PARAMS, 0.01, fusion_weight=weight)
    assert out == step(s, u, PARAMS, 0.01)


def test_localize_gyro_bias_accumulation():
    # Closed form: after N steps the blended heading is w * bias * N * dt.
    s = VehicleState(0.0, 0.0, 0.0)
    u = ControlInput(1.0, 0.0)
    for _ in range(100):
        s = localize(s, u, GyroSample(0.01), PARAMS, 0.01, fusion_weight=0.98)
    assert s.theta_rad == pytest.approx(0.98 * 0.01 * 1.0, rel=1e-9)


def test_localize_nonfinite_gyro_falls_back_to_kinematics():
    s = VehicleState(0.0, 0.0, 0.0)
    u = ControlInput(0.5, 0.2)
    out = localize(s, u, GyroSample(math.nan), PARAMS, 0.01, fusion_weight=0.98)
    assert out == step(s, u, PARAMS, 0.01)


def test_localize_absolute_heading_sample():
    s = VehicleState(0.0, 0.0, 0.0)
    u = ControlInput(0.0, 0.0)
    out = localize(s, u, GyroSample(0.0, heading_rad=0.2), PARAMS, 0.01, fusion_weight=1.0)
    assert out.theta_rad == pytest.approx(0.2, abs=1e-12)


def test_localize_rejects_bad_weight():
    with pytest.raises(ValueError):
        localize(VehicleState(0, 0, 0), ControlInput(0, 0), GyroSample(0.0), PARAMS, 0.01, 1.5)


def test_params_invariants():
    with pytest.raises(ValueError):
        VehicleParams(wheelbase_m=0.0)
    with pytest.raises(ValueError):
        VehicleParams(max_steer_rad=math.pi / 2)
    with pytest.raises(ValueError):
        VehicleParams(wheelbase_m=0.5, overall_length_m=0.4)
