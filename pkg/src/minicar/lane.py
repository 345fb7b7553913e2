"""Lane-detection post-processing: BEV projection, polynomial fits,
middle-line synthesis and path-error extraction.

BEV frame: forward_m grows ahead of the camera, lateral_m grows to the
vehicle's right (image-u direction). The bottom-center pixel of the frame
maps to (0, 0).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import PathError

PROVENANCE_BOTH = "both_averaged"
PROVENANCE_LEFT = "left_shifted"
PROVENANCE_RIGHT = "right_shifted"
PROVENANCE_HELD = "held_from_history"

DEFAULT_HOLD_LIMIT = 15
_RMS_FLOOR = 1e-12


@dataclass(frozen=True)
class LanePoints:
    """Per-frame detected lane points in image coordinates (u right, v down)."""

    left: np.ndarray
    right: np.ndarray
    width_px: int
    height_px: int

    def __post_init__(self) -> None:
        for name in ("left", "right"):
            pts = np.asarray(getattr(self, name), dtype=float).reshape(-1, 2)
            object.__setattr__(self, name, pts)
            if pts.size and (
                pts[:, 0].min() < 0
                or pts[:, 0].max() > self.width_px
                or pts[:, 1].min() < 0
                or pts[:, 1].max() > self.height_px
            ):
                raise ValueError(f"{name} lane points outside frame bounds")


@dataclass(frozen=True)
class BevConfig:
    """Pixel-to-meter projection of the lower frame portion."""

    px_per_meter: float = 100.0
    roi_length_m: float = 2.0
    roi_width_m: float = 2.4
    horizon_row_px: float = 280.0

    def __post_init__(self) -> None:
        if not (self.px_per_meter > 0 and self.roi_length_m > 0 and self.roi_width_m > 0):
            raise ValueError("BevConfig scale and ROI extents must be > 0")


@dataclass(frozen=True)
class LanePolynomial:
    """Lateral offset as a polynomial of forward distance, metric BEV frame.

    coefficients are ascending (c0, c1[, c2]); degree is 1 or 2.
    """

    coefficients: tuple[float, ...]
    s_min_m: float
    s_max_m: float
    source: str = "middle"

    def __post_init__(self) -> None:
        if len(self.coefficients) not in (2, 3):
            raise ValueError("degree must be 1 or 2")
        if not self.s_max_m > self.s_min_m:
            raise ValueError("validity range must be non-empty")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def value(self, s: float) -> float:
        out = 0.0
        for c in reversed(self.coefficients):
            out = out * s + c
        return out

    def slope(self, s: float) -> float:
        c = self.coefficients
        out = c[1]
        if len(c) == 3:
            out += 2.0 * c[2] * s
        return out

    def shifted(self, delta_lateral_m: float, source: str | None = None) -> "LanePolynomial":
        coeffs = (self.coefficients[0] + delta_lateral_m,) + self.coefficients[1:]
        return LanePolynomial(coeffs, self.s_min_m, self.s_max_m, source or self.source)


@dataclass(frozen=True)
class MiddleLineState:
    """Current middle-line estimate plus how it was obtained.

    age_frames counts frames since the last detection-backed update and is
    0 unless provenance is held_from_history. lane_lost goes True once the
    hold limit is exhausted; the stale line is retained for logging but
    must not be treated as a detection.
    """

    current: LanePolynomial | None = None
    age_frames: int = 0
    provenance: str = PROVENANCE_HELD
    lane_lost: bool = False

    def __post_init__(self) -> None:
        if self.provenance != PROVENANCE_HELD and self.age_frames != 0:
            raise ValueError("age_frames must be 0 for detection-backed updates")


def to_bev(points: LanePoints, cfg: BevConfig) -> tuple[np.ndarray, np.ndarray]:
    """Project both point sets to metric (forward_m, lateral_m) columns.

    Points above the horizon row or outside the ROI are dropped.
    """
    out = []
    half_w = points.width_px / 2.0
    for pts in (points.left, points.right):
        if pts.size == 0:
            out.append(np.empty((0, 2)))
            continue
        u, v = pts[:, 0], pts[:, 1]
        forward = (points.height_px - v) / cfg.px_per_meter
        lateral = (u - half_w) / cfg.px_per_meter
        keep = (
            (v >= cfg.horizon_row_px)
            & (forward <= cfg.roi_length_m)
            & (np.abs(lateral) <= cfg.roi_width_m / 2.0)
        )
        out.append(np.column_stack([forward[keep], lateral[keep]]))
    return out[0], out[1]


def filter_outliers(points: np.ndarray, k_sigma: float) -> np.ndarray:
    """Drop points far from the set's running linear fit.

    Uses externally studentized residuals (leave-one-out sigma corrected
    for leverage) against k_sigma, which keeps a single gross outlier from
    inflating sigma and masking itself. No-op below 4 points; never removes
    more than half the set in one call.
    """
    if not k_sigma > 0:
        raise ValueError("k_sigma must be > 0")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n < 4:
        return pts
    s, x = pts[:, 0], pts[:, 1]
    design = np.column_stack([np.ones(n), s])
    coef, _, rank, _ = np.linalg.lstsq(design, x, rcond=None)
    if rank < 2:
        return pts
    resid = x - design @ coef
    ssr = float(resid @ resid)
    if ssr <= _RMS_FLOOR * n:
        return pts
    # Leverage h_ii of the linear fit, then leave-one-out variance.
    gram_inv = np.linalg.inv(design.T @ design)
    leverage = np.einsum("ij,jk,ik->i", design, gram_inv, design)
    one_minus_h = np.clip(1.0 - leverage, 1e-12, None)
    loo_var = (ssr - resid**2 / one_minus_h) / max(n - 3, 1)
    loo_sigma = np.sqrt(np.clip(loo_var, 1e-30, None))
    t = np.abs(resid) / (loo_sigma * np.sqrt(one_minus_h))
    flagged = t > k_sigma
    max_remove = n // 2
    if flagged.sum() > max_remove:
        worst = np.argsort(-t)[:max_remove]
        flagged = np.zeros(n, dtype=bool)
        flagged[worst] = True
    return pts[~flagged]


def fit_lane(points: np.ndarray, source: str = "middle") -> LanePolynomial | None:
    """Least-squares fit of lateral vs forward; quadratic only when it earns it.

    Degree 2 is chosen when there are at least 5 points and the quadratic
    cuts the RMS residual by at least 20% vs the line. Returns None for
    fewer than 2 usable points (no lane).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return None
    s, x = pts[:, 0], pts[:, 1]
    if len(np.unique(s)) < 2:
        return None
    vander = np.vander(s, 3, increasing=True)
    lin, _, _, _ = np.linalg.lstsq(vander[:, :2], x, rcond=None)
    rms1 = _rms(x - vander[:, :2] @ lin)
    coeffs = tuple(float(c) for c in lin)
    if len(pts) >= 5 and rms1 > _RMS_FLOOR:
        quad, _, _, _ = np.linalg.lstsq(vander, x, rcond=None)
        rms2 = _rms(x - vander @ quad)
        if rms2 <= 0.8 * rms1:
            coeffs = tuple(float(c) for c in quad)
    return LanePolynomial(coeffs, float(s.min()), float(s.max()), source)


def _rms(resid: np.ndarray) -> float:
    return float(np.sqrt(np.mean(resid**2)))


def middle_line(
    left: LanePolynomial | None,
    right: LanePolynomial | None,
    prev: MiddleLineState,
    lane_width_m: float,
    hold_limit: int = DEFAULT_HOLD_LIMIT,
) -> MiddleLineState:
    """Synthesize the middle line from whichever boundaries were detected.

    Both sides: coefficient-wise average. One side: shift inward by half
    the lane width. Neither: carry the previous line, aging it each frame
    until the hold limit is exhausted and lane_lost is raised. A lost lane
    is never silently replaced by a fabricated one.
    """
    if not lane_width_m > 0:
        raise ValueError("lane_width_m must be > 0")
    if left is not None and right is not None:
        lc = _padded(left.coefficients)
        rc = _padded(right.coefficients)
        avg = tuple((a + b) / 2.0 for a, b in zip(lc, rc))
        mid = LanePolynomial(
            _trimmed(avg),
            min(left.s_min_m, right.s_min_m),
            max(left.s_max_m, right.s_max_m),
            "middle",
        )
        return MiddleLineState(mid, 0, PROVENANCE_BOTH)
    if left is not None:
        return MiddleLineState(left.shifted(lane_width_m / 2.0, "middle"), 0, PROVENANCE_LEFT)
    if right is not None:
        return MiddleLineState(right.shifted(-lane_width_m / 2.0, "middle"), 0, PROVENANCE_RIGHT)
    age = prev.age_frames + 1
    lost = prev.current is None or age > hold_limit
    return MiddleLineState(prev.current, age, PROVENANCE_HELD, lost)


def _padded(coeffs: tuple[float, ...]) -> tuple[float, float, float]:
    return coeffs + (0.0,) * (3 - len(coeffs))


def _trimmed(coeffs: tuple[float, ...]) -> tuple[float, ...]:
    if len(coeffs) == 3 and coeffs[2] == 0.0:
        return coeffs[:2]
    return coeffs


def path_error(middle: LanePolynomial) -> PathError:
    """Middle-line offset and tangent at forward distance 0, vehicle frame.

    Positive values mean the line sits to the vehicle's right / bends
    right. The closed-loop wiring negates this once to get vehicle-relative
    errors (positive CE = vehicle right of the line).
    """
    return PathError(middle.value(0.0), math.atan(middle.slope(0.0)))


def path_curvature(middle: LanePolynomial) -> float:
    """|x''| / (1 + x'^2)^(3/2) at forward distance 0; 0 for lines."""
    if middle.degree < 2:
        return 0.0
    c1 = middle.coefficients[1]
    c2 = middle.coefficients[2]
    return abs(2.0 * c2) / (1.0 + c1 * c1) ** 1.5


def load_lane_points_csv(
    path: str | Path,
    width_px: int,
    height_px: int,
) -> list[tuple[int, LanePoints]]:
    """Replay-mode loader: CSV columns frame_id, side, u_px, v_px.

    Returns (frame_id, LanePoints) pairs in ascending frame order; frames
    may have empty sides.
    """
    frames: dict[int, dict[str, list[tuple[float, float]]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"frame_id", "side", "u_px", "v_px"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"lane point CSV must have columns {sorted(required)}")
        for row in reader:
            side = row["side"].strip().lower()
            if side not in ("left", "right"):
                raise ValueError(f"unknown lane side {row['side']!r}")
            frame = frames.setdefault(int(row["frame_id"]), {"left": [], "right": []})
            frame[side].append((float(row["u_px"]), float(row["v_px"])))
    out = []
    for frame_id in sorted(frames):
        sides = frames[frame_id]
        out.append(
            (
                frame_id,
                LanePoints(
                    np.array(sides["left"]).reshape(-1, 2),
                    np.array(sides["right"]).reshape(-1, 2),
                    width_px,
                    height_px,
                ),
            )
        )
    return out
