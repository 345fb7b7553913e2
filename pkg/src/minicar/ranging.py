"""Monocular distance/size estimation from bounding-box pixel heights,
plus the affine regression that absorbs residual lens distortion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    focal_length_mm: float = 3.0
    sensor_height_mm: float = 2.76
    sensor_height_px: float = 1080.0

    def __post_init__(self) -> None:
        if min(self.focal_length_mm, self.sensor_height_mm, self.sensor_height_px) <= 0:
            raise ValueError("camera intrinsics must all be > 0")


@dataclass(frozen=True)
class Detection:
    """One detected object: bbox in pixels plus the class's known real height."""

    class_label: str
    u_px: float
    v_px: float
    width_px: float
    height_px: float
    known_real_height_mm: float

    def __post_init__(self) -> None:
        if not self.height_px > 0:
            raise ValueError("height_px must be > 0")
        if not self.known_real_height_mm > 0:
            raise ValueError("known_real_height_mm must be > 0")


@dataclass(frozen=True)
class RangeCorrection:
    """Affine distance correction: corrected = coefficient*raw + intercept."""

    coefficient: float = 1.0
    intercept_mm: float = 0.0

    def __post_init__(self) -> None:
        if not self.coefficient > 0:
            raise ValueError("coefficient must be > 0")


def object_height_on_sensor(det: Detection, cam: CameraIntrinsics) -> float:
    """Projected height on the sensor: sensor_mm * height_px / sensor_px."""
    return cam.sensor_height_mm * det.height_px / cam.sensor_height_px


def distance_to_object(det: Detection, cam: CameraIntrinsics) -> float:
    """Pinhole range: real_height * focal_length / height_on_sensor (mm)."""
    return det.known_real_height_mm * cam.focal_length_mm / object_height_on_sensor(det, cam)


def real_object_height(distance_mm: float, on_sensor_mm: float, cam: CameraIntrinsics) -> float:
    """Invert the pinhole relation: distance * on_sensor / focal_length."""
    if not (distance_mm > 0 and on_sensor_mm > 0):
        raise ValueError("distance_mm and on_sensor_mm must be > 0")
    return distance_mm * on_sensor_mm / cam.focal_length_mm


def fit_correction(samples: Sequence[tuple[float, float]]) -> RangeCorrection:
    """Ordinary least squares of true distance on estimated distance.

    Needs at least two samples with distinct estimates.
    """
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    if len(arr) < 2 or len(np.unique(arr[:, 0])) < 2:
        raise ValueError("need >= 2 samples with distinct estimated distances")
    intercept, slope = np.polynomial.polynomial.polyfit(arr[:, 0], arr[:, 1], 1)
    return RangeCorrection(float(slope), float(intercept))


def corrected_distance(raw_mm: float, corr: RangeCorrection) -> float:
    """Apply the affine correction, floored at 0."""
    if raw_mm < 0:
        raise ValueError("raw_mm must be >= 0")
    return max(0.0, corr.coefficient * raw_mm + corr.intercept_mm)
