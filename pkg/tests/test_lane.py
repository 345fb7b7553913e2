import math

import numpy as np
import pytest

from minicar.lane import (
    BevConfig,
    LanePoints,
    LanePolynomial,
    MiddleLineState,
    PROVENANCE_BOTH,
    PROVENANCE_HELD,
    PROVENANCE_LEFT,
    PROVENANCE_RIGHT,
    filter_outliers,
    fit_lane,
    load_lane_points_csv,
    middle_line,
    path_curvature,
    path_error,
    to_bev,
)

CFG = BevConfig(px_per_meter=100.0, roi_length_m=2.0, roi_width_m=2.4, horizon_row_px=280.0)


def _points(left=(), right=(), w=640, h=480):
    return LanePoints(np.array(left).reshape(-1, 2), np.array(right).reshape(-1, 2), w, h)


def test_to_bev_origin_convention():
    left, _ = to_bev(_points(left=[(320.0, 480.0)]), CFG)
    assert left.shape == (1, 2)
    assert left[0] == pytest.approx([0.0, 0.0], abs=1e-12)


def test_to_bev_lateral_scaling():
    # 50 px left of center at the bottom row -> lateral -0.5 m.
    left, _ = to_bev(_points(left=[(270.0, 480.0)]), CFG)
    assert left[0] == pytest.approx([0.0, -0.5], abs=1e-12)


def test_to_bev_drops_above_horizon():
    left, _ = to_bev(_points(left=[(320.0, 279.0), (320.0, 281.0)]), CFG)
    assert len(left) == 1
    assert left[0][0] == pytest.approx((480 - 281) / 100.0)


def test_to_bev_drops_outside_roi_width():
    _, right = to_bev(_points(right=[(320.0 + 121.0, 480.0), (330.0, 480.0)]), CFG)
    assert len(right) == 1


def test_to_bev_empty_input():
    left, right = to_bev(_points(), CFG)
    assert left.size == 0 and right.size == 0


def test_lane_points_reject_out_of_frame():
    with pytest.raises(ValueError):
        _points(left=[(-1.0, 10.0)])


def test_filter_outliers_collinear_unchanged():
    pts = np.column_stack([np.arange(6.0), 0.3 * np.arange(6.0) + 0.1])
    out = filter_outliers(pts, 2.0)
    assert np.array_equal(out, pts)


def _jackknife_is_outlier(pts: np.ndarray, idx: int, k: float) -> bool:
    """Hand oracle: residual of point idx against the fit of the others."""
    rest = np.delete(pts, idx, axis=0)
    coef = np.polynomial.polynomial.polyfit(rest[:, 0], rest[:, 1], 1)
    pred = np.polynomial.polynomial.polyval(pts[idx, 0], coef)
    resid_rest = rest[:, 1] - np.polynomial.polynomial.polyval(rest[:, 0], coef)
    sigma = float(np.std(resid_rest, ddof=1))
    return abs(pts[idx, 1] - pred) > k * max(sigma, 1e-12)


def test_filter_outliers_removes_gross_outlier():
    laterals = [-0.50, -0.49, -0.51, -0.50, 0.80]
    pts = np.column_stack([np.arange(5.0), laterals])
    assert _jackknife_is_outlier(pts, 4, 2.0)  # oracle agrees it is an outlier
    out = filter_outliers(pts, 2.0)
    assert len(out) == 4
    assert 0.80 not in out[:, 1]


def test_filter_outliers_small_sample_noop():
    pts = np.column_stack([np.arange(3.0), [0.0, 0.0, 5.0]])
    assert np.array_equal(filter_outliers(pts, 2.0), pts)


def test_filter_outliers_never_removes_more_than_half():
    rng = np.random.default_rng(7)
    s = np.arange(10.0)
    x = 0.1 * s + rng.normal(0, 2.0, 10)  # noisy enough to flag many
    pts = np.column_stack([s, x])
    out = filter_outliers(pts, 0.5)
    assert len(out) >= 5


def test_fit_lane_exact_line():
    pts = np.column_stack([np.linspace(0, 2, 8), np.full(8, 0.5)])
    fit = fit_lane(pts)
    assert fit.degree == 1
    assert fit.coefficients[0] == pytest.approx(0.5, abs=1e-12)
    assert fit.coefficients[1] == pytest.approx(0.0, abs=1e-12)


def test_fit_lane_quadratic_selection():
    s = np.linspace(0.0, 2.5, 6)
    pts = np.column_stack([s, 0.1 * s**2])
    fit = fit_lane(pts)
    assert fit.degree == 2
    assert fit.coefficients[2] == pytest.approx(0.1, rel=1e-9)


def test_fit_lane_two_points_interpolates():
    fit = fit_lane(np.array([[0.0, 0.1], [1.0, 0.3]]))
    assert fit.degree == 1
    assert fit.value(0.0) == pytest.approx(0.1, abs=1e-12)
    assert fit.value(1.0) == pytest.approx(0.3, abs=1e-12)


def test_fit_lane_too_few_points():
    assert fit_lane(np.array([[0.0, 0.1]])) is None
    assert fit_lane(np.empty((0, 2))) is None


def test_fit_lane_recovers_noiseless_coefficients():
    s = np.linspace(0.2, 2.0, 9)
    for coeffs in [(0.3, -0.2), (0.05, 0.1, -0.08)]:
        x = np.polynomial.polynomial.polyval(s, coeffs)
        fit = fit_lane(np.column_stack([s, x]))
        assert fit.degree == len(coeffs) - 1
        for got, want in zip(fit.coefficients, coeffs):
            assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_middle_line_averages_both():
    left = LanePolynomial((-0.5, 0.0), 0.0, 2.0, "left")
    right = LanePolynomial((0.5, 0.0), 0.0, 2.0, "right")
    state = middle_line(left, right, MiddleLineState(), 0.7)
    assert state.provenance == PROVENANCE_BOTH
    assert state.age_frames == 0
    assert state.current.coefficients[0] == pytest.approx(0.0, abs=1e-15)


def test_middle_line_single_side_shifts_inward():
    right = LanePolynomial((0.35, 0.0), 0.0, 2.0, "right")
    state = middle_line(None, right, MiddleLineState(), 0.70)
    assert state.provenance == PROVENANCE_RIGHT
    assert state.current.coefficients[0] == pytest.approx(0.0, abs=1e-15)

    left = LanePolynomial((-0.35, 0.1), 0.0, 2.0, "left")
    state = middle_line(left, None, MiddleLineState(), 0.70)
    assert state.provenance == PROVENANCE_LEFT
    assert state.current.coefficients == pytest.approx((0.0, 0.1), abs=1e-15)


def test_middle_line_hold_rule():
    prev = MiddleLineState(LanePolynomial((0.1, 0.0), 0.0, 2.0), 0, PROVENANCE_BOTH)
    held = middle_line(None, None, prev, 0.7)
    assert held.provenance == PROVENANCE_HELD
    assert held.age_frames == 1
    assert held.current.coefficients[0] == pytest.approx(0.1)
    assert not held.lane_lost


def test_middle_line_hold_monotone_until_lost():
    state = MiddleLineState(LanePolynomial((0.1, 0.0), 0.0, 2.0), 0, PROVENANCE_BOTH)
    hold_limit = 15
    ages = []
    for _ in range(hold_limit + 1):
        state = middle_line(None, None, state, 0.7, hold_limit)
        ages.append(state.age_frames)
    # Strictly increasing ages, lost only on the step past the limit.
    assert ages == list(range(1, hold_limit + 2))
    assert state.lane_lost


def test_middle_line_lost_exactly_at_limit_plus_one():
    hold_limit = 4
    state = MiddleLineState(LanePolynomial((0.1, 0.0), 0.0, 2.0), 0, PROVENANCE_BOTH)
    flags = []
    for _ in range(hold_limit + 1):
        state = middle_line(None, None, state, 0.7, hold_limit)
        flags.append(state.lane_lost)
    assert flags == [False] * hold_limit + [True]


def test_middle_line_recovers_after_loss():
    state = MiddleLineState(None, 20, PROVENANCE_HELD, True)
    left = LanePolynomial((-0.35, 0.0), 0.0, 2.0, "left")
    right = LanePolynomial((0.35, 0.0), 0.0, 2.0, "right")
    state = middle_line(left, right, state, 0.7)
    assert state.provenance == PROVENANCE_BOTH
    assert not state.lane_lost
    assert state.age_frames == 0


def test_middle_line_averaging_identity():
    # L averaged with (L shifted by +w) equals L shifted by +w/2.
    w = 0.7
    left = LanePolynomial((-0.3, 0.12, -0.04), 0.0, 2.0, "left")
    right = left.shifted(w, "right")
    state = middle_line(left, right, MiddleLineState(), w)
    expected = left.shifted(w / 2.0)
    for got, want in zip(state.current.coefficients, expected.coefficients):
        assert got == pytest.approx(want, abs=1e-12)


def test_path_error_trivial_and_derived():
    assert path_error(LanePolynomial((0.0, 0.0), 0.0, 2.0)).cross_track_m == 0.0
    pe = path_error(LanePolynomial((0.2, 0.1), 0.0, 2.0))
    assert pe.cross_track_m == pytest.approx(0.2, abs=1e-12)
    assert pe.heading_err_rad == pytest.approx(math.atan(0.1), abs=1e-12)
    quad = path_error(LanePolynomial((0.0, 0.0, 0.05), 0.0, 2.0))
    assert quad.cross_track_m == 0.0
    assert quad.heading_err_rad == 0.0


def test_path_curvature():
    assert path_curvature(LanePolynomial((0.3, -0.2), 0.0, 2.0)) == 0.0
    assert path_curvature(LanePolynomial((0.0, 0.0, 0.1), 0.0, 2.0)) == pytest.approx(0.2)
    out = path_curvature(LanePolynomial((0.2, 0.1, 0.05), 0.0, 2.0))
    assert out == pytest.approx(0.1 / (1.01) ** 1.5, rel=1e-12)


def test_translation_equivariance():
    s = np.linspace(0.1, 1.9, 12)
    x = 0.08 * s**2 - 0.05 * s + 0.2
    delta = 0.37
    base = fit_lane(np.column_stack([s, x]))
    shifted = fit_lane(np.column_stack([s, x + delta]))
    assert base.degree == shifted.degree
    pe0, pe1 = path_error(base), path_error(shifted)
    assert pe1.cross_track_m - pe0.cross_track_m == pytest.approx(delta, abs=1e-12)
    assert pe1.heading_err_rad == pytest.approx(pe0.heading_err_rad, abs=1e-12)


def test_lane_points_csv_replay(tmp_path):
    path = tmp_path / "lanes.csv"
    path.write_text(
        "frame_id,side,u_px,v_px\n"
        "0,left,100,400\n0,right,540,400\n1,right,530,390\n"
    )
    frames = load_lane_points_csv(path, 640, 480)
    assert [fid for fid, _ in frames] == [0, 1]
    first = frames[0][1]
    assert len(first.left) == 1 and len(first.right) == 1
    assert len(frames[1][1].left) == 0


def test_lane_points_csv_rejects_bad_side(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("frame_id,side,u_px,v_px\n0,center,100,400\n")
    with pytest.raises(ValueError):
        load_lane_points_csv(path, 640, 480)
