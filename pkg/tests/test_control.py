import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from src.control import (
    cone_contains,
    nominal_control,
    project_discontinuous,
    project_smooth,
    smoothing_factor,
    tangent_projector,
)
from src.errors import InputError
from src.models import ControllerConfig, SafetyInput

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)
vectors = st.integers(min_value=2, max_value=5).flatmap(lambda n: arrays(np.float64, n, elements=finite))


def unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@pytest.fixture
def cfg() -> ControllerConfig:
    return ControllerConfig(goal=[0.0, 0.0], k=0.5, epsilon=0.2, epsilon_prime=0.4, sensing_radius=0.5)


# -- nominal law and projector ---------------------------------------------------


def test_nominal_control(cfg):
    assert_allclose(nominal_control([1.0, 0.0], cfg), [-0.5, 0.0])
    assert_allclose(nominal_control([0.0, 0.0], cfg), [0.0, 0.0])


def test_nominal_control_rejects_non_finite(cfg):
    with pytest.raises(InputError):
        nominal_control([math.nan, 0.0], cfg)


def test_projector_examples():
    assert_allclose(tangent_projector([1.0, 0.0]), [[0.0, 0.0], [0.0, 1.0]])
    s = 1.0 / math.sqrt(2.0)
    assert_allclose(tangent_projector([s, s]) @ np.array([1.0, 1.0]), [0.0, 0.0], atol=1e-15)


def test_projector_needs_unit_normal():
    with pytest.raises(InputError):
        tangent_projector([1.0, 1.0])


@settings(max_examples=500, deadline=None)
@given(vectors, vectors)
def test_projector_is_idempotent_and_symmetric(raw_nu, z):
    if np.linalg.norm(raw_nu) < 1e-3 or raw_nu.size != z.size:
        return
    nu = unit(raw_nu)
    P = tangent_projector(nu)
    assert_allclose(P @ P, P, atol=1e-12)
    assert_allclose(P, P.T, atol=1e-15)
    eigenvalues = np.linalg.eigvalsh(P)
    assert np.all(np.minimum(np.abs(eigenvalues), np.abs(eigenvalues - 1.0)) <= 1e-12)
    assert np.sum(np.abs(eigenvalues) <= 1e-12) == 1
    assert abs(float(nu @ (P @ z))) <= 1e-12 * max(1.0, np.linalg.norm(z))


def test_cone_membership():
    assert cone_contains([1.0, 0.0], [-1.0, 5.0])
    assert cone_contains([1.0, 0.0], [0.0, 1.0])
    assert not cone_contains([1.0, 0.0], [1e-9, 0.0])


# -- discontinuous law ---------------------------------------------------------


def test_interior_point_keeps_nominal(cfg):
    x = np.array([3.0, 1.0])
    assert_allclose(project_discontinuous(x, False, None, cfg), nominal_control(x, cfg))


def test_boundary_inward_velocity_is_unchanged(cfg):
    # κ0 = (−1.5, 0) points away from an obstacle on the right
    x = np.array([3.0, 0.0])
    assert_allclose(project_discontinuous(x, True, [1.0, 0.0], cfg), [-1.5, 0.0])


def test_boundary_outward_velocity_is_projected(cfg):
    x = np.array([3.0, 1.0])
    out = project_discontinuous(x, True, [-1.0, 0.0], cfg)
    assert_allclose(out, [0.0, -0.5])


def test_tangential_velocity_takes_projected_branch(cfg):
    x = np.array([0.0, 2.0])
    assert_allclose(project_discontinuous(x, True, [1.0, 0.0], cfg), [0.0, -1.0])


def test_antipodal_point_is_an_equilibrium(cfg):
    x = np.array([4.0, 0.0])
    assert_allclose(project_discontinuous(x, True, [-1.0, 0.0], cfg), [0.0, 0.0], atol=1e-15)


def check_projection_cases(cases: int, seed: int, candidates: int = 10_000) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(cases):
        n = int(rng.integers(2, 6))
        goal = rng.uniform(-5, 5, n)
        c = ControllerConfig(goal=goal, k=float(rng.uniform(0.1, 3.0)))
        x = rng.uniform(-5, 5, n)
        nu = unit(rng.standard_normal(n))
        kappa = nominal_control(x, c)
        out = project_discontinuous(x, True, nu, c)
        assert float(nu @ out) <= 1e-12
        # nearest point of the half-space cone: no feasible candidate is closer to κ0
        z = np.vstack(
            [
                rng.standard_normal((candidates // 2, n)) * 5.0,
                out + rng.standard_normal((candidates - candidates // 2, n)) * 0.1,
            ]
        )
        z -= np.maximum(z @ nu, 0.0)[:, None] * nu
        assert np.all(np.linalg.norm(z - kappa, axis=1) >= np.linalg.norm(out - kappa) - 1e-12)
        # idempotent
        assert_allclose(out - nu * max(float(nu @ out), 0.0), out, atol=1e-12)


def test_projection_property_suite():
    check_projection_cases(300, seed=11)


@pytest.mark.slow
def test_projection_property_suite_full():
    check_projection_cases(10_000, seed=11)


# -- smooth law -------------------------------------------------------------------


def test_smoothing_factor(cfg):
    assert smoothing_factor(0.1, cfg) == 1.0
    assert smoothing_factor(0.2, cfg) == pytest.approx(1.0)
    assert smoothing_factor(0.3, cfg) == pytest.approx(0.5)
    assert smoothing_factor(0.4, cfg) == pytest.approx(0.0)


def test_smoothing_factor_rejects_negative_distance(cfg):
    with pytest.raises(InputError):
        smoothing_factor(-0.1, cfg)


def test_far_from_obstacles_is_nominal(cfg):
    x = np.array([3.0, 1.0])
    s = SafetyInput(distance=1.0, bearing_gradient=[1.0, 0.0])
    assert_allclose(project_smooth(x, s, cfg), nominal_control(x, cfg))


def test_missing_bearing_is_nominal(cfg):
    x = np.array([3.0, 1.0])
    s = SafetyInput(distance=0.3, bearing_gradient=None)
    assert_allclose(project_smooth(x, s, cfg), nominal_control(x, cfg))


def test_moving_away_is_nominal(cfg):
    # the gradient points away from the obstacle; κ0·g > 0 means moving away
    x = np.array([3.0, 0.0])
    s = SafetyInput(distance=0.3, bearing_gradient=[-1.0, 0.0])
    assert_allclose(project_smooth(x, s, cfg), [-1.5, 0.0])


def test_receding_diagonal_velocity_is_nominal(cfg):
    # κ0 = (1, −1) against g = (0, −1) gives κ0·g = 1 > 0: the output is κ0
    x = np.array([-2.0, 2.0])
    assert_allclose(nominal_control(x, cfg), [1.0, -1.0])
    assert_allclose(project_smooth(x, SafetyInput(0.3, [0.0, -1.0]), cfg), [1.0, -1.0])
    # (1, −0.5) is the half blend for the opposite gradient
    assert_allclose(project_smooth(x, SafetyInput(0.3, [0.0, 1.0]), cfg), [1.0, -0.5])


@settings(max_examples=500, deadline=None)
@given(vectors, vectors, st.floats(min_value=0.0, max_value=0.6), st.floats(min_value=0.1, max_value=3.0))
def test_both_laws_never_increase_goal_distance(x, raw_g, d, k):
    if raw_g.size != x.size or np.linalg.norm(raw_g) < 1e-3:
        return
    g = unit(raw_g)
    c = ControllerConfig(goal=np.zeros(x.size), k=k)
    e = x - c.goal
    tolerance = 1e-12 * max(1.0, k * float(e @ e))
    assert float(e @ project_smooth(x, SafetyInput(d, g), c)) <= tolerance
    assert float(e @ project_discontinuous(x, True, -g, c)) <= tolerance
    assert float(e @ project_discontinuous(x, False, None, c)) <= tolerance


def test_half_blend(cfg):
    x = np.array([3.0, 1.0])
    s = SafetyInput(distance=0.3, bearing_gradient=[1.0, 0.0])
    assert_allclose(project_smooth(x, s, cfg), [-0.75, -0.5])


def test_full_projection_inside_margin(cfg):
    x = np.array([3.0, 1.0])
    s = SafetyInput(distance=0.15, bearing_gradient=[1.0, 0.0])
    assert_allclose(project_smooth(x, s, cfg), [0.0, -0.5])


def test_continuity_across_outer_margin():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        eps = float(rng.uniform(0.05, 0.5))
        eps_prime = eps + float(rng.uniform(0.05, 0.5))
        c = ControllerConfig(
            goal=rng.uniform(-5, 5, 2),
            k=float(rng.uniform(0.1, 2.0)),
            epsilon=eps,
            epsilon_prime=eps_prime,
            sensing_radius=eps_prime + 0.1,
        )
        x = rng.uniform(-5, 5, 2)
        g = unit(rng.standard_normal(2))
        outside = project_smooth(x, SafetyInput(eps_prime + 1e-6, g), c)
        inside = project_smooth(x, SafetyInput(eps_prime - 1e-6, g), c)
        bound = c.k * np.linalg.norm(x - c.goal) / (eps_prime - eps) * 2e-6 + 1e-12
        assert np.linalg.norm(outside - inside) <= bound


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=0.0, max_value=0.39), st.floats(min_value=-math.pi, max_value=math.pi))
def test_smooth_output_never_approaches_inside_margin(d, angle):
    c = ControllerConfig(goal=[0.0, 0.0])
    x = np.array([2.0, -1.0])
    g = np.array([math.cos(angle), math.sin(angle)])
    out = project_smooth(x, SafetyInput(d, g), c)
    if d <= c.epsilon:
        assert float(out @ g) >= -1e-12


# -- configuration ------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"k": 0.0},
        {"epsilon": 0.4, "epsilon_prime": 0.4},
        {"epsilon_prime": 0.6, "sensing_radius": 0.5},
        {"reach": 0.3},
    ],
)
def test_controller_config_preconditions(kwargs):
    with pytest.raises(InputError):
        ControllerConfig(goal=[0.0, 0.0], **kwargs)


def test_reach_defaults_to_outer_margin(cfg):
    assert cfg.h == cfg.epsilon_prime
