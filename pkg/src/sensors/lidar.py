"""Planar 360° range scanner: polar range curve and its (distance, bearing) reduction."""

from __future__ import annotations

import logging
import math

import numpy as np

from src.errors import InputError
from src.geometry import ray_cast_many
from src.models import Environment, LidarScan, SafetyInput, as_point

logger = logging.getLogger(__name__)

DEFAULT_BEAMS = 360


def beam_angles(count: int) -> np.ndarray:
    """θ_j = −π + j·2π/count."""
    return -math.pi + 2.0 * math.pi * np.arange(count) / count


def simulate_lidar(env: Environment, x, count: int = DEFAULT_BEAMS, max_range: float = 0.5) -> LidarScan:
    """Sample ρ(θ; x) = min(R, distance to the boundary along θ) on a uniform grid."""
    x = as_point(x)
    if x.size != 2:
        raise InputError(f"the LiDAR model is planar, got a {x.size}-D point")
    if count < 8:
        raise InputError(f"a scan needs at least 8 beams, got {count}")
    angles = beam_angles(count)
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    ranges = ray_cast_many(env, x, directions, max_range)
    return LidarScan(angles=angles, ranges=ranges, max_range=max_range)


def scan_to_safety_input(scan: LidarScan) -> tuple[SafetyInput, float]:
    """Distance = min range, gradient = −(cos θ*, sin θ*); bearing dropped when nothing is in range."""
    if scan.ranges.size == 0:
        raise InputError("cannot reduce an empty scan")
    j = int(np.argmin(scan.ranges))
    theta = float(scan.angles[j])
    distance = float(scan.ranges[j])
    if distance >= scan.max_range:
        return SafetyInput(distance=distance, bearing_gradient=None), theta
    gradient = -np.array([math.cos(theta), math.sin(theta)])
    return SafetyInput(distance=distance, bearing_gradient=gradient), theta
