"""Simulated perception: lane points, time-of-flight ranges and sign
detections are generated from ground truth so the rest of the stack can be
exercised without any real detector.

Lane points are produced by inverting the BEV projection, and detection
pixel heights by inverting the pinhole range equation, so the zero-noise
pipeline recovers ground truth exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fsm import SignEvent
from .kinematics import VehicleParams, VehicleState
from .lane import BevConfig, LanePoints
from .mapping import RangeReading
from .ranging import CameraIntrinsics, Detection, RangeCorrection, corrected_distance, distance_to_object
from .scenario import ObstacleField, Road, SensorNoise, SignPlacement


@dataclass(frozen=True)
class CameraConfig:
    """Frame geometry shared by the lane sampler and the BEV pipeline."""

    bev: BevConfig = field(default_factory=BevConfig)
    width_px: int = 640
    height_px: int = 480
    fov_rad: float = math.radians(170.0)
    detect_range_m: float = 2.5
    parallel_tol_rad: float = math.radians(60.0)
    lane_stride: int = 5
    lane_outlier_k: float = 2.0
    hold_limit_frames: int = 15


@dataclass(frozen=True)
class RangeMount:
    name: str
    mount_x_m: float
    mount_y_m: float
    facing_rad: float
    max_range_m: float = 1.0


def default_range_mounts(params: VehicleParams, max_range_m: float = 1.0) -> list[RangeMount]:
    """Front, rear and side mounts on the body outline."""
    nose = params.overall_length_m - params.rear_overhang_m
    tail = -params.rear_overhang_m
    half_w = params.overall_width_m / 2.0
    mid = params.wheelbase_m / 2.0
    return [
        RangeMount("front", nose, 0.0, 0.0, max_range_m),
        RangeMount("rear", tail, 0.0, math.pi, max_range_m),
        RangeMount("left", mid, half_w, math.pi / 2.0, max_range_m),
        RangeMount("right", mid, -half_w, -math.pi / 2.0, max_range_m),
    ]


def _side_pixels(
    bx: np.ndarray,
    by: np.ndarray,
    bh: np.ndarray,
    bm: np.ndarray,
    pose: VehicleState,
    cam: CameraConfig,
    dropout: float,
    sigma_px: float,
    rng: np.random.Generator,
) -> np.ndarray:
    cos_t, sin_t = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
    dx = bx - pose.x_m
    dy = by - pose.y_m
    fwd = dx * cos_t + dy * sin_t
    lat_right = -(-dx * sin_t + dy * cos_t)
    rel_heading = np.arctan2(np.sin(bh - pose.theta_rad), np.cos(bh - pose.theta_rad))
    keep = (
        (fwd >= 0.0)
        & (fwd <= cam.bev.roi_length_m)
        & (np.abs(lat_right) <= cam.bev.roi_width_m / 2.0)
        & bm
        & (np.abs(rel_heading) <= cam.parallel_tol_rad)
    )
    u = cam.width_px / 2.0 + lat_right[keep] * cam.bev.px_per_meter
    v = cam.height_px - fwd[keep] * cam.bev.px_per_meter
    if sigma_px > 0 and len(u):
        u = u + rng.normal(0.0, sigma_px, len(u))
        v = v + rng.normal(0.0, sigma_px, len(v))
    if dropout > 0 and len(u):
        mask = rng.random(len(u)) >= dropout
        u, v = u[mask], v[mask]
    inside = (u >= 0) & (u <= cam.width_px) & (v >= 0) & (v <= cam.height_px)
    return np.column_stack([u[inside], v[inside]])


def sample_lane_points(
    road: Road,
    pose: VehicleState,
    cam: CameraConfig,
    noise: SensorNoise,
    rng: np.random.Generator,
) -> LanePoints:
    """Lane boundary points ahead of the camera, projected to pixels.

    Only marked road stretches whose local heading is roughly parallel to
    the camera axis produce points (a lane detector sees lines it is
    driving along, not a perpendicular road crossing the view).
    """
    stride = max(1, cam.lane_stride)
    sl = slice(None, None, stride)
    left = _side_pixels(
        road.left_xs[sl], road.left_ys[sl], road.headings[sl], road.marked[sl],
        pose, cam, noise.lane_dropout_left, noise.lane_sigma_px, rng,
    )
    right = _side_pixels(
        road.right_xs[sl], road.right_ys[sl], road.headings[sl], road.marked[sl],
        pose, cam, noise.lane_dropout_right, noise.lane_sigma_px, rng,
    )
    return LanePoints(left, right, cam.width_px, cam.height_px)


def simulate_range(
    obstacles: ObstacleField,
    pose: VehicleState,
    mount: RangeMount,
    noise: SensorNoise,
    rng: np.random.Generator,
) -> RangeReading:
    """Exact ray cast to the nearest obstacle, plus configured noise."""
    cos_t, sin_t = math.cos(pose.theta_rad), math.sin(pose.theta_rad)
    sx = pose.x_m + mount.mount_x_m * cos_t - mount.mount_y_m * sin_t
    sy = pose.y_m + mount.mount_x_m * sin_t + mount.mount_y_m * cos_t
    dist = obstacles.ray_distance(sx, sy, pose.theta_rad + mount.facing_rad)
    measured = min(dist, mount.max_range_m)
    if noise.range_sigma_m > 0:
        measured += rng.normal(0.0, noise.range_sigma_m)
    measured = min(max(measured, 0.0), mount.max_range_m)
    return RangeReading(
        mount.mount_x_m, mount.mount_y_m, mount.facing_rad, measured, mount.max_range_m
    )


def simulate_detections(
    placements: list[SignPlacement],
    t: float,
    pose: VehicleState,
    intrinsics: CameraIntrinsics,
    cam: CameraConfig,
    correction: RangeCorrection,
    noise: SensorNoise,
    rng: np.random.Generator,
) -> list[tuple[SignEvent, Detection]]:
    """Signs in the field of view, as (event, detection) pairs by distance.

    Pixel heights are generated by inverting the pinhole range relation,
    so the estimator recovers the true camera-to-sign distance exactly at
    zero noise.
    """
    out = []
    for placement in placements:
        dx = placement.x_m - pose.x_m
        dy = placement.y_m - pose.y_m
        dist = math.hypot(dx, dy)
        if dist <= 0 or dist > cam.detect_range_m:
            continue
        bearing = math.remainder(math.atan2(dy, dx) - pose.theta_rad, math.tau)
        if abs(bearing) > cam.fov_rad / 2.0:
            continue
        fwd = dx * math.cos(pose.theta_rad) + dy * math.sin(pose.theta_rad)
        if fwd <= 0:
            continue
        sign_class = placement.sign_class_at(t)
        height_px = (
            placement.height_mm
            * intrinsics.focal_length_mm
            * intrinsics.sensor_height_px
            / (intrinsics.sensor_height_mm * dist * 1000.0)
        )
        if noise.detection_sigma_px > 0:
            height_px += rng.normal(0.0, noise.detection_sigma_px)
        if height_px <= 0:
            continue
        u = cam.width_px / 2.0 + math.tan(bearing) * 100.0
        det = Detection(
            class_label=sign_class.value,
            u_px=min(max(u, 0.0), float(cam.width_px)),
            v_px=cam.height_px / 2.0,
            width_px=0.6 * height_px,
            height_px=height_px,
            known_real_height_mm=placement.height_mm,
        )
        est_m = corrected_distance(distance_to_object(det, intrinsics), correction) / 1000.0
        out.append((SignEvent(sign_class, est_m, 1.0, placement.sign_id), det))
    out.sort(key=lambda pair: (pair[0].distance_m, pair[0].sign_id))
    return out
