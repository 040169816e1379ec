"""Stereo depth: disparity triangulation, depth maps and their (distance, bearing) reduction.

Pixel coordinates are measured from the principal point (x right, y down),
the camera looks along +z, and the right camera sits at +baseline on x.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from src.errors import InfiniteDepthError, InputError
from src.geometry import contains, ray_cast_many
from src.models import DepthMap, Environment, Pose, SafetyInput, StereoRig

logger = logging.getLogger(__name__)

RECTIFIED_TOLERANCE = 1e-9
DEFAULT_MAX_DEPTH = 20.0


def disparity_to_depth(px_left: float, px_right: float, rig: StereoRig) -> float:
    """z = f·b / |p_x^L − p_x^R|."""
    disparity = abs(px_left - px_right)
    if disparity == 0:
        raise InfiniteDepthError("zero disparity: the point is at infinite depth")
    return rig.focal_length * rig.baseline / disparity


def pixel_to_point(p_left, p_right, rig: StereoRig) -> np.ndarray:
    """Triangulate a rectified pixel pair into camera-frame coordinates (p_x, p_y, p_z)."""
    xl, yl = (float(v) for v in p_left)
    xr, yr = (float(v) for v in p_right)
    if abs(yl - yr) > RECTIFIED_TOLERANCE:
        raise InputError(f"pixel pair is not rectified (rows {yl} and {yr})")
    disparity = xl - xr
    if disparity == 0:
        raise InfiniteDepthError("zero disparity: the point is at infinite depth")
    if disparity < 0:
        raise InputError(f"disparity must be positive, got {disparity}")
    return np.array(
        [
            rig.baseline * xl / disparity,
            rig.baseline * yl / disparity,
            rig.focal_length * rig.baseline / disparity,
        ]
    )


def depth_map_to_safety_input(dm: DepthMap, rig: StereoRig) -> SafetyInput:
    """Closest observed point in the robot frame, returned as (distance, ∇d).

    The minimum is taken over robot-frame distance ‖R_L p + p_L‖, and the
    bearing is negated so it points from the obstacle toward the robot.
    An all-infinite map yields an infinite distance and no bearing.
    """
    if not math.isclose(dm.focal_length, rig.focal_length, rel_tol=1e-12):
        raise InputError("depth map and rig disagree on the focal length")
    finite = np.isfinite(dm.depths)
    if not finite.any():
        return SafetyInput(distance=math.inf, bearing_gradient=None)

    rows, cols = np.nonzero(finite)
    z = dm.depths[rows, cols]
    px = cols - dm.principal_point[0]
    py = rows - dm.principal_point[1]
    camera = np.column_stack([px * z / dm.focal_length, py * z / dm.focal_length, z])
    robot = camera @ rig.rotation.T + rig.translation
    j = int(np.argmin(np.linalg.norm(robot, axis=1)))

    disparity = rig.focal_length * rig.baseline / z[j]
    p = pixel_to_point((px[j], py[j]), (px[j] - disparity, py[j]), rig)
    q = rig.rotation @ p + rig.translation
    distance = float(np.linalg.norm(q))
    logger.debug("Closest depth pixel (%d, %d) at %.6g m", cols[j], rows[j], distance)
    return SafetyInput(distance=distance, bearing_gradient=-q / distance)


def simulate_depth_map(
    env: Environment,
    pose: Pose,
    rig: StereoRig,
    resolution: tuple[int, int],
    max_depth: float = DEFAULT_MAX_DEPTH,
) -> DepthMap:
    """Render a left-camera depth map by casting one ray per pixel through the pinhole."""
    if env.dim not in (None, 3):
        raise InputError("depth maps need a 3-D environment")
    width, height = resolution
    if width < 1 or height < 1:
        raise InputError(f"invalid resolution {resolution}")
    origin = pose.position + pose.rotation @ rig.translation
    if not contains(env, origin):
        raise InputError("the camera centre is not in the free space")

    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    v, u = np.mgrid[0:height, 0:width]
    rays = np.stack([u - cx, v - cy, np.full(u.shape, rig.focal_length)], axis=-1).reshape(-1, 3)
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    world = rays @ (pose.rotation @ rig.rotation).T

    hits = ray_cast_many(env, origin, world, max_depth)
    depths = np.where(hits < max_depth, hits * rays[:, 2], np.inf).reshape(height, width)
    return DepthMap(depths=depths, focal_length=rig.focal_length, principal_point=(cx, cy))
