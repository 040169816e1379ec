import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from src.errors import InfiniteDepthError, InputError
from src.geometry import boundary_query, contains
from src.models import Ball, DepthMap, Environment, HalfSpace, LidarScan, Pose, StereoRig
from src.sensors import (
    depth_map_to_safety_input,
    disparity_to_depth,
    pixel_to_point,
    scan_to_safety_input,
    simulate_depth_map,
    simulate_lidar,
)
from src.sensors.lidar import beam_angles


def ball_hit(distance_to_center: float, radius: float, offset: float) -> float:
    """Range along a ray *offset* radians away from the direction of a ball's centre."""
    return distance_to_center * math.cos(offset) - math.sqrt(
        radius**2 - (distance_to_center * math.sin(offset)) ** 2
    )


# -- LiDAR ----------------------------------------------------------------------


def test_beam_angles_start_at_minus_pi():
    angles = beam_angles(8)
    assert angles[0] == -math.pi
    assert_allclose(np.diff(angles), math.pi / 4)


def test_fig2_scan_from_origin(fig2_env):
    scan = simulate_lidar(fig2_env, [0.0, 0.0], 360, max_range=3.0)
    s, theta = scan_to_safety_input(scan)
    assert theta == pytest.approx(math.pi / 4)
    assert s.distance == pytest.approx(2.0 * math.sqrt(2.0) - 0.5, abs=1e-9)
    assert_allclose(s.bearing_gradient, -np.array([1.0, 1.0]) / math.sqrt(2.0), atol=1e-12)


def test_nothing_in_range_drops_bearing(fig2_env):
    scan = simulate_lidar(fig2_env, [0.0, 0.0], 360, max_range=0.5)
    s, _ = scan_to_safety_input(scan)
    assert s.distance == 0.5
    assert s.bearing_gradient is None
    assert np.all(scan.ranges == 0.5)


def test_lidar_quantization_bound(fig2_env):
    rng = np.random.default_rng(17)
    center, radius = np.array([2.0, 2.0]), 0.5
    half_beam = math.pi / 360
    checked = 0
    while checked < 100:
        x = center + rng.uniform(-1.0, 1.0, 2)
        if not contains(fig2_env, x):
            continue
        exact = boundary_query(fig2_env, x).distance
        if exact > 0.4:
            continue
        s, _ = scan_to_safety_input(simulate_lidar(fig2_env, x, 360, max_range=0.5))
        bound = ball_hit(exact + radius, radius, half_beam)
        assert exact - 1e-12 <= s.distance <= bound + 1e-12
        checked += 1


def test_scan_tie_takes_first_beam():
    angles = beam_angles(8)
    scan = LidarScan(angles, np.full(8, 0.3), max_range=0.5)
    s, theta = scan_to_safety_input(scan)
    assert theta == angles[0]
    assert_allclose(s.bearing_gradient, [1.0, 0.0], atol=1e-15)


def test_lidar_is_planar():
    env = Environment(obstacles=(Ball([0.0, 0.0, 3.0], 1.0),))
    with pytest.raises(InputError):
        simulate_lidar(env, [0.0, 0.0, 0.0])


def test_lidar_needs_enough_beams(fig2_env):
    with pytest.raises(InputError):
        simulate_lidar(fig2_env, [0.0, 0.0], count=4)


# -- stereo ---------------------------------------------------------------------------


@pytest.fixture
def rig() -> StereoRig:
    return StereoRig(focal_length=500.0, baseline=0.1)


def test_disparity_to_depth(rig):
    assert disparity_to_depth(100.0, 90.0, rig) == pytest.approx(5.0)


def test_zero_disparity_is_infinite_depth(rig):
    with pytest.raises(InfiniteDepthError):
        disparity_to_depth(42.0, 42.0, rig)
    with pytest.raises(InfiniteDepthError):
        pixel_to_point((3.0, 1.0), (3.0, 1.0), rig)


def test_unrectified_pair_is_rejected(rig):
    with pytest.raises(InputError):
        pixel_to_point((10.0, 5.0), (0.0, 6.0), rig)


def test_negative_disparity_is_rejected(rig):
    with pytest.raises(InputError):
        pixel_to_point((0.0, 5.0), (10.0, 5.0), rig)


def test_stereo_round_trip(rig):
    rng = np.random.default_rng(23)
    points = np.column_stack(
        [rng.uniform(-2, 2, 1000), rng.uniform(-2, 2, 1000), rng.uniform(0.5, 10.0, 1000)]
    )
    for X, Y, Z in points:
        left = (rig.focal_length * X / Z, rig.focal_length * Y / Z)
        right = (rig.focal_length * (X - rig.baseline) / Z, rig.focal_length * Y / Z)
        assert_allclose(pixel_to_point(left, right, rig), [X, Y, Z], atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=0.5, max_value=50.0), st.floats(min_value=-300.0, max_value=300.0))
def test_depth_matches_triangulated_z(depth, px):
    r = StereoRig(focal_length=400.0, baseline=0.2)
    disparity = r.focal_length * r.baseline / depth
    assert disparity_to_depth(px, px - disparity, r) == pytest.approx(depth, rel=1e-12)


def test_empty_depth_map():
    dm = DepthMap(np.full((4, 4), np.inf), focal_length=500.0, principal_point=(1.5, 1.5))
    s = depth_map_to_safety_input(dm, StereoRig(500.0, 0.1))
    assert math.isinf(s.distance)
    assert s.bearing_gradient is None


def test_fronto_parallel_wall(rig):
    wall = Environment(obstacles=(HalfSpace([0.0, 0.0, 1.0], 2.0),))
    dm = simulate_depth_map(wall, Pose([0.0, 0.0, 0.0]), rig, resolution=(5, 5))
    assert_allclose(dm.depths, 2.0, atol=1e-12)
    s = depth_map_to_safety_input(dm, rig)
    assert s.distance == pytest.approx(2.0)
    assert_allclose(s.bearing_gradient, [0.0, 0.0, -1.0], atol=1e-12)


def test_depth_map_nearest_point_matches_oracle():
    rig = StereoRig(focal_length=200.0, baseline=0.1)
    env = Environment(obstacles=(Ball([0.2, 0.1, 3.0], 0.5),))
    dm = simulate_depth_map(env, Pose([0.0, 0.0, 0.0]), rig, resolution=(41, 41))
    s = depth_map_to_safety_input(dm, rig)
    exact = boundary_query(env, [0.0, 0.0, 0.0]).distance
    assert exact - 1e-9 <= s.distance <= exact + 1e-3
    direction = np.array([0.2, 0.1, 3.0]) / np.linalg.norm([0.2, 0.1, 3.0])
    assert float(-s.bearing_gradient @ direction) > math.cos(0.01)


def test_missed_pixels_are_infinite(rig):
    env = Environment(obstacles=(Ball([0.0, 0.0, 3.0], 0.2),))
    dm = simulate_depth_map(env, Pose([0.0, 0.0, 0.0]), rig, resolution=(201, 201), max_depth=10.0)
    assert np.isinf(dm.depths[0, 0])
    assert np.isfinite(dm.depths[100, 100])


def test_focal_length_mismatch(rig):
    dm = DepthMap(np.full((3, 3), 2.0), focal_length=400.0, principal_point=(1.0, 1.0))
    with pytest.raises(InputError):
        depth_map_to_safety_input(dm, rig)


def test_depth_map_needs_three_dimensions(fig2_env, rig):
    with pytest.raises(InputError):
        simulate_depth_map(fig2_env, Pose([0.0, 0.0, 0.0]), rig, resolution=(3, 3))
