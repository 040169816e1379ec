import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import InputError, SceneValidationError
from src.geometry import boundary_query, contains
from src.models import Ball, ControllerConfig, Outcome
from src.sphere_world import (
    ESCAPE_RADIUS,
    SphereWorld,
    equilibrium_residual,
    instability_probe,
    instability_probes,
    random_sphere_world,
    undesired_equilibria,
)


@pytest.fixture
def fig2_world() -> SphereWorld:
    return SphereWorld(radius=None, obstacles=(Ball([2.0, 2.0], 0.5),))


@pytest.fixture
def cfg() -> ControllerConfig:
    return ControllerConfig(goal=[0.0, 0.0])


def free_goal(world: SphereWorld, rng: np.random.Generator) -> np.ndarray:
    env = world.environment()
    while True:
        x = rng.uniform(-5.0, 5.0, world.dim)
        if contains(env, x) and boundary_query(env, x).distance > 0.1:
            return x


# -- equilibria ------------------------------------------------------------------


def test_fig2_equilibrium(fig2_world, cfg):
    report = undesired_equilibria(fig2_world, cfg)
    assert len(report.points) == 1
    eq = report.points[0]
    alpha = 1.0 + 1.0 / (4.0 * math.sqrt(2.0))
    assert np.linalg.norm(eq.point - alpha * np.array([2.0, 2.0])) <= 1e-12
    assert eq.alpha == pytest.approx(alpha, abs=1e-15)
    assert eq.residual <= 1e-12
    assert_allclose(eq.point, [2.35355339, 2.35355339], atol=1e-8)


def test_collinear_equilibrium(cfg):
    world = SphereWorld(radius=10.0, obstacles=(Ball([3.0, 0.0], 1.0),))
    eq = undesired_equilibria(world, cfg).points[0]
    assert eq.alpha == pytest.approx(4.0 / 3.0)
    assert_allclose(eq.point, [4.0, 0.0], atol=1e-12)
    assert_allclose(eq.manifold_direction, [1.0, 0.0])


def test_no_obstacles_no_equilibria(cfg):
    assert undesired_equilibria(SphereWorld(radius=5.0), cfg).points == ()


def test_goal_inside_obstacle_is_rejected(fig2_world):
    with pytest.raises(InputError):
        undesired_equilibria(fig2_world, ControllerConfig(goal=[2.0, 2.1]))


def test_report_is_json_ready(fig2_world, cfg):
    data = undesired_equilibria(fig2_world, cfg).as_dict()
    assert data["format_version"] == 1
    assert data["equilibria"][0]["index"] == 1
    assert len(data["equilibria"][0]["stable_manifold"]["direction"]) == 2


def test_random_worlds_equilibria_lie_on_antipodal_points():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        dim = 2 if trial % 2 else 3
        world = random_sphere_world(dim, int(rng.integers(0, 6)), seed=trial)
        c = ControllerConfig(goal=free_goal(world, rng))
        for eq, ball in zip(undesired_equilibria(world, c).points, world.obstacles):
            assert abs(np.linalg.norm(eq.point - ball.center) - ball.radius) <= 1e-12
            along = eq.point - c.goal
            axis = ball.center - c.goal
            assert float(along @ axis) > 0
            assert np.linalg.norm(along) > np.linalg.norm(axis)
            assert np.linalg.norm(np.cross(along, axis) if dim == 3 else along[0] * axis[1] - along[1] * axis[0]) <= 1e-9
            assert eq.residual <= 1e-12


# -- residual -----------------------------------------------------------------------


def test_residual_is_zero_at_equilibrium(fig2_world, cfg):
    eq = undesired_equilibria(fig2_world, cfg).points[0]
    assert equilibrium_residual(fig2_world, eq.point, cfg) <= 1e-12


def test_residual_at_near_side_is_nominal_speed(fig2_world, cfg):
    near = np.array([2.0, 2.0]) - 0.5 * np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert equilibrium_residual(fig2_world, near, cfg) == pytest.approx(0.5 * np.linalg.norm(near))


def test_residual_with_tangential_nominal(cfg):
    world = SphereWorld(radius=None, obstacles=(Ball([3.0, 0.0], 1.0),))
    tangent_point = np.array([8.0 / 3.0, 2.0 * math.sqrt(2.0) / 3.0])
    assert equilibrium_residual(world, tangent_point, cfg) == pytest.approx(0.5 * math.sqrt(8.0))


def test_residual_needs_boundary_point(fig2_world, cfg):
    with pytest.raises(InputError):
        equilibrium_residual(fig2_world, [1.0, 1.0], cfg)


def test_workspace_sphere_has_no_equilibria(sphere_env):
    world = SphereWorld.from_environment(sphere_env)
    c = ControllerConfig(goal=[0.0, 0.0])
    rng = np.random.default_rng(0)
    directions = rng.standard_normal((10_000, 2))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    residuals = [equilibrium_residual(world, 5.0 * d, c) for d in directions]
    assert min(residuals) > 1e-6


# -- validation and generation --------------------------------------------------------


def test_overlapping_world_is_rejected():
    with pytest.raises(SceneValidationError) as info:
        SphereWorld(radius=10.0, obstacles=(Ball([0.0, 0.0], 1.0), Ball([1.5, 0.0], 1.0)))
    assert info.value.report.pair == (1, 2)


def test_random_world_is_reproducible():
    a = random_sphere_world(2, 4, seed=9)
    b = random_sphere_world(2, 4, seed=9)
    assert len(a.obstacles) == 4
    for ba, bb in zip(a.obstacles, b.obstacles):
        assert_allclose(ba.center, bb.center)
        assert ba.radius == bb.radius


# -- instability probes -----------------------------------------------------------------


def test_probe_escapes_and_converges(fig2_world, cfg):
    report = instability_probe(fig2_world, 1, cfg, perturbation=1e-3, horizon=100.0)
    assert report.escaped
    assert 0.5 < report.escape_time < 5.0
    assert report.terminal_distance < 0.05
    assert report.trajectory.outcome is Outcome.CONVERGED
    assert np.all(np.diff(report.trajectory.goal_distances) <= 1e-9)


def test_escape_is_measured_from_the_equilibrium(fig2_world, cfg):
    eq = undesired_equilibria(fig2_world, cfg).points[0]
    report = instability_probe(fig2_world, 1, cfg, perturbation=1e-3, horizon=100.0)
    away = np.linalg.norm(report.trajectory.states - eq.point, axis=1)
    assert np.linalg.norm(report.start - eq.point) < ESCAPE_RADIUS
    first = int(np.argmax(away > ESCAPE_RADIUS))
    assert first > 0
    assert np.max(away[:first]) <= ESCAPE_RADIUS < away[first]
    assert report.escape_time == report.trajectory.times[first]


def test_unperturbed_probe_stays_at_equilibrium(fig2_world, cfg):
    report = instability_probe(fig2_world, 1, cfg, perturbation=0.0, horizon=10.0)
    assert not report.escaped
    assert report.trajectory.outcome is Outcome.EQUILIBRIUM_TRAP


def test_probe_on_stable_manifold_collapses(fig2_world, cfg):
    eq = undesired_equilibria(fig2_world, cfg).points[0]
    report = instability_probe(fig2_world, 1, cfg, perturbation=0.05, horizon=10.0, direction="manifold")
    assert not report.escaped
    assert np.linalg.norm(report.trajectory.final_state - eq.point) < 0.01


def test_probe_index_is_checked(fig2_world, cfg):
    with pytest.raises(InputError):
        instability_probe(fig2_world, 2, cfg)


@pytest.mark.slow
def test_parallel_probes_cover_every_obstacle(sphere_env):
    world = SphereWorld.from_environment(sphere_env)
    reports = instability_probes(world, ControllerConfig(goal=[0.0, 0.0]), horizon=100.0)
    assert [r.index for r in reports] == [1, 2, 3]
    assert all(r.escaped for r in reports)
